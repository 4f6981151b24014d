//! Dense symmetric tridiagonal eigen-solvers used by the Krylov and 1D paths.

use crate::error::{Error, Result};

/// Implicit QL with Wilkinson shifts. On return `diag` holds the eigenvalues
/// and column `j` of `vectors` the eigenvector for `diag[j]`, expressed in
/// the basis `vectors` held on entry (pass the identity for plain
/// eigenvectors). `off[i]` couples `i` and `i + 1`; `off[n - 1]` is ignored.
pub fn ql_implicit(diag: &mut [f64], off: &mut [f64], vectors: &mut [Vec<f64>]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() + dd == dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    residual: off[l].abs(),
                });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                for row in vectors.iter_mut() {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Number of eigenvalues strictly greater than `x` (Sturm count).
pub fn count_above(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut below = 0;
    let mut pivot = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        pivot = diag[i] - x - if i == 0 { 0.0 } else { coupling / pivot };
        if pivot == 0.0 {
            pivot = -f64::EPSILON * (diag[i].abs() + x.abs() + 1.0);
        }
        if pivot < 0.0 {
            below += 1;
        }
    }
    diag.len() - below
}

/// Largest eigenvalue by bisection on the Sturm count. Returns an interval
/// `(lo, hi)` with the eigenvalue inside.
pub fn largest_eigenvalue(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let radius = |i: usize| {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { off[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    hi += f64::EPSILON * hi.abs().max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_above(diag, off, mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Solves `(T - shift) x = rhs` for a tridiagonal `T` by Gaussian elimination
/// without pivoting; intended for shifts outside the spectrum.
pub fn shifted_solve(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut denom = diag[0] - shift;
    if denom.abs() < tiny {
        denom = -tiny;
    }
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    x[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - shift - off[i - 1] * c[i - 1];
        if denom.abs() < tiny {
            denom = -tiny;
        }
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}
