//! Stationary states of the birth-weighted model.
//!
//! With `v = b q` the stationary equation becomes `D Δv + (m/b) v = λ v / b`
//! with zero-flux boundaries. On the grid, with trapezoid weights `W`, the
//! rescaling `w = sqrt(W/b) v` turns this into an ordinary symmetric problem
//! `C w = λ w`, whose top eigenpair is computed matrix-free.

mod explicit;
mod studies;
pub mod tridiagonal;

pub use explicit::{explicit_1d, mass_ratio_lower_bound, Explicit1DSolution, EXPLICIT_ROOT_BRACKET};
pub use studies::{
    compare_restricted, large_d_limit_check, monotonicity_in_d, piecewise_validation, LimitReport,
    MonotonicityReport, PiecewiseReport, PIECEWISE_MARGIN,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{weighted_sum, Grid, GridField};
use crate::landscape::PhenotypeLandscape;
use crate::pde::neumann_laplacian;

/// The symmetrized stationary operator `C`.
#[derive(Clone, Debug)]
pub struct SymmetrizedOperator {
    grid: Grid,
    diffusion: f64,
    birth: Vec<f64>,
    fitness: Vec<f64>,
    weights: Vec<f64>,
    /// `sqrt(W / b)`.
    scale: Vec<f64>,
}

impl SymmetrizedOperator {
    pub fn new(land: &PhenotypeLandscape, grid: &Grid, diffusion: f64) -> Result<Self> {
        if !(diffusion.is_finite() && diffusion > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mutational parameter D must be positive, got {diffusion}"
            )));
        }
        if land.dim != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "landscape dimension {} does not match grid dimension {}",
                land.dim,
                grid.dim()
            )));
        }
        let birth = grid.try_tabulate(|p| land.birth(p))?;
        if let Some(b) = birth.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::Precondition(format!(
                "birth rate must be positive on the grid, found {b}"
            )));
        }
        let fitness = grid.try_tabulate(|p| land.fitness(p))?;
        let weights = grid.weights();
        let scale = weights.iter().zip(&birth).map(|(w, b)| (w / b).sqrt()).collect();
        Ok(Self {
            grid: grid.clone(),
            diffusion,
            birth,
            fitness,
            weights,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.birth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.birth.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Shift making `C + shift` entrywise nonnegative.
    pub fn shift(&self) -> f64 {
        let max_b = self.birth.iter().fold(0.0f64, |m, &b| m.max(b));
        let max_ratio = self
            .fitness
            .iter()
            .zip(&self.birth)
            .fold(0.0f64, |m, (f, b)| m.max((f / b).abs()));
        let n = self.grid.dim() as f64;
        max_ratio * max_b + 4.0 * n * self.diffusion * max_b / self.grid.min_spacing().powi(2)
    }

    /// `out = C w`. `scratch` must have two buffers of the grid size.
    pub fn apply(&self, w: &[f64], out: &mut [f64], scratch: &mut [Vec<f64>; 2]) {
        let [v, lap] = scratch;
        for ((v, w), s) in v.iter_mut().zip(w).zip(&self.scale) {
            *v = w / s;
        }
        neumann_laplacian(&self.grid, v, lap);
        let d = self.diffusion;
        for i in 0..w.len() {
            out[i] = self.scale[i] * (self.birth[i] * d * lap[i] + self.fitness[i] * v[i]);
        }
    }

    /// Dense copy of `C`, column by column. Only sensible on small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut scratch = [vec![0.0; n], vec![0.0; n]];
        let mut rows = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col, &mut scratch);
            for i in 0..n {
                rows[i][j] = col[i];
            }
            e[j] = 0.0;
        }
        rows
    }

    /// Density `q = v / b` with unit mass, recovered from `w`.
    pub fn density(&self, w: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = w
            .iter()
            .zip(&self.scale)
            .zip(&self.birth)
            .map(|((w, s), b)| w / (s * b))
            .collect();
        let mass = weighted_sum(&self.weights, &q);
        q.iter_mut().for_each(|v| *v /= mass);
        q
    }

    /// Max-norm of `D Δ(b q) + (m - λ) q`.
    pub fn residual(&self, q: &[f64], lambda: f64) -> f64 {
        let u: Vec<f64> = q.iter().zip(&self.birth).map(|(q, b)| q * b).collect();
        let mut lap = vec![0.0; q.len()];
        neumann_laplacian(&self.grid, &u, &mut lap);
        (0..q.len())
            .map(|i| (self.diffusion * lap[i] + (self.fitness[i] - lambda) * q[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Tridiagonal entries of `C` in one dimension.
    fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let h2 = self.grid.spacing(0).powi(2);
        let d = self.diffusion;
        let coef = |i: usize, j: usize| -> f64 {
            // Stencil coefficient L_ij for j = i +- 1.
            let boundary = (i == 0 && j == 1) || (i + 1 == n && j + 2 == n);
            if boundary {
                2.0 / h2
            } else {
                1.0 / h2
            }
        };
        let diag = (0..n).map(|i| -2.0 * d * self.birth[i] / h2 + self.fitness[i]).collect();
        let off = (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.scale[i] * self.birth[i] * d * coef(i, i + 1) / self.scale[i + 1]
                } else {
                    0.0
                }
            })
            .collect();
        (diag, off)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EigenMethod {
    Power,
    Lanczos,
    Tridiagonal,
}

#[derive(Clone, Debug)]
pub struct StationaryOptions {
    /// Tolerance on the change of the eigenvalue between checks, relative to `1 + |λ|`.
    pub eigen_tol: f64,
    /// Tolerance on the residual, relative to `max(1, ‖q‖∞)`.
    pub residual_tol: f64,
    /// Power iterations allowed before switching to an accelerated method.
    pub power_budget: usize,
    pub lanczos_basis: usize,
    pub max_restarts: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            eigen_tol: 1e-12,
            residual_tol: 1e-10,
            power_budget: 100_000,
            lanczos_basis: 240,
            max_restarts: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSolution {
    #[serde(skip)]
    pub q_inf: GridField,
    pub m_inf: f64,
    pub residual: f64,
    pub iterations: usize,
    pub method: EigenMethod,
    /// Discrete Rayleigh quotient at `sqrt(b) q_inf`.
    pub rayleigh: f64,
    pub left_mass: f64,
    pub right_mass: f64,
}

/// Principal eigenpair with default tolerances.
pub fn solve_stationary(land: &PhenotypeLandscape, grid: &Grid, diffusion: f64) -> Result<SpectralSolution> {
    solve_stationary_with(land, grid, diffusion, &StationaryOptions::default())
}

pub fn solve_stationary_with(
    land: &PhenotypeLandscape,
    grid: &Grid,
    diffusion: f64,
    options: &StationaryOptions,
) -> Result<SpectralSolution> {
    let op = SymmetrizedOperator::new(land, grid, diffusion)?;
    let n = op.len();
    let shift = op.shift();
    let mut scratch = [vec![0.0; n], vec![0.0; n]];
    let mut cw = vec![0.0; n];

    // Start from v = 1, exact when the fitness is flat.
    let mut w: Vec<f64> = op.scale.clone();
    normalize(&mut w);

    let converged = |w: &[f64], lambda: f64| -> (bool, f64) {
        let q = op.density(w);
        let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let r = op.residual(&q, lambda);
        (r <= options.residual_tol * scale, r)
    };

    // Plain power iteration on C + shift.
    const CHECK_EVERY: usize = 100;
    const PROJECT_EVERY: usize = 1000;
    let mut iterations = 0;
    let mut lambda_prev = f64::NAN;
    let mut last_residual = f64::INFINITY;
    let mut history: Option<(usize, f64)> = None;
    let mut method = EigenMethod::Power;
    let mut done = false;
    while iterations < options.power_budget {
        op.apply(&w, &mut cw, &mut scratch);
        iterations += 1;
        let lambda = dot(&w, &cw);
        if iterations % CHECK_EVERY == 1 {
            let change = (lambda - lambda_prev).abs();
            let (ok, r) = converged(&w, lambda);
            last_residual = r;
            if ok && change <= options.eigen_tol * (1.0 + lambda.abs()) {
                done = true;
                lambda_prev = lambda;
                break;
            }
            lambda_prev = lambda;
        }
        if iterations % PROJECT_EVERY == 1 && iterations > 1 {
            let r = symmetric_residual(&w, &cw, lambda);
            if let Some((at, prev)) = history {
                let rate = (r / prev).ln() / (iterations - at) as f64;
                let target = (options.eigen_tol * (1.0 + lambda.abs())).min(r);
                let projected = if rate < 0.0 {
                    iterations as f64 + (target / r).ln() / rate
                } else {
                    f64::INFINITY
                };
                if projected > options.power_budget as f64 {
                    break;
                }
            }
            history = Some((iterations, r));
        }
        for (x, y) in w.iter_mut().zip(&cw) {
            *x = y + shift * *x;
        }
        normalize(&mut w);
    }

    let mut lambda = lambda_prev;
    if !done {
        if grid.dim() == 1 {
            method = EigenMethod::Tridiagonal;
            let (diag, off) = op.tridiagonal();
            let (_, hi) = largest_eigenvalue_bounds(&diag, &off);
            let spread = shift.max(1.0);
            let mu = hi + 1e-13 * spread;
            for _ in 0..8 {
                w = tridiagonal::shifted_solve(&diag, &off, mu, &w);
                normalize(&mut w);
                orient(&mut w);
                iterations += 1;
                op.apply(&w, &mut cw, &mut scratch);
                let next = dot(&w, &cw);
                let change = (next - lambda).abs();
                lambda = next;
                let (ok, r) = converged(&w, lambda);
                last_residual = r;
                if ok && change <= options.eigen_tol * (1.0 + lambda.abs()) {
                    done = true;
                    break;
                }
            }
        } else {
            method = EigenMethod::Lanczos;
            let mut lanczos = Lanczos::new(n, options.lanczos_basis.min(n));
            for _ in 0..options.max_restarts {
                let (theta, steps) = lanczos.top_ritz(&op, &mut w, &mut scratch)?;
                iterations += steps;
                orient(&mut w);
                let change = (theta - lambda).abs();
                lambda = theta;
                let (ok, r) = converged(&w, lambda);
                last_residual = r;
                if ok && change <= options.eigen_tol * (1.0 + lambda.abs()) {
                    done = true;
                    break;
                }
            }
        }
    }
    if !done {
        return Err(Error::NoConvergence {
            iterations,
            residual: last_residual,
        });
    }

    polish_positive(&op, &mut w, shift, &mut scratch)?;
    op.apply(&w, &mut cw, &mut scratch);
    let lambda = dot(&w, &cw) / dot(&w, &w);
    let q = op.density(&w);
    let residual = op.residual(&q, lambda);
    let psi: Vec<f64> = q.iter().zip(&op.birth).map(|(q, b)| q * b.sqrt()).collect();
    let rayleigh = rayleigh_from_parts(&op, &psi)?;
    let (left_mass, right_mass) = half_masses(grid, &op.weights, &q);
    Ok(SpectralSolution {
        q_inf: GridField::new(grid.clone(), q)?,
        m_inf: lambda,
        residual,
        iterations,
        method,
        rayleigh,
        left_mass,
        right_mass,
    })
}

fn largest_eigenvalue_bounds(diag: &[f64], off: &[f64]) -> (f64, f64) {
    tridiagonal::largest_eigenvalue(diag, off)
}

/// Flips the overall sign, folds roundoff-level negative entries and takes a
/// few positivity-preserving power steps.
fn polish_positive(op: &SymmetrizedOperator, w: &mut [f64], shift: f64, scratch: &mut [Vec<f64>; 2]) -> Result<()> {
    orient(w);
    let top = w.iter().fold(0.0f64, |m, v| m.max(*v));
    for v in w.iter_mut() {
        if *v < 0.0 && -*v <= 1e-9 * top {
            *v = -*v;
        }
    }
    let mut cw = vec![0.0; w.len()];
    for _ in 0..4 {
        op.apply(w, &mut cw, scratch);
        for (x, y) in w.iter_mut().zip(&cw) {
            *x = y + shift * *x;
        }
        normalize(w);
    }
    // Compare v = w / s, the quantity the theory speaks about.
    for (node, (x, s)) in w.iter().zip(&op.scale).enumerate() {
        let v = x / s;
        if !(v > 0.0) {
            return Err(Error::NotPositive { node, value: v });
        }
    }
    Ok(())
}

fn orient(w: &mut [f64]) {
    let sum: f64 = w.iter().sum();
    if sum < 0.0 {
        w.iter_mut().for_each(|v| *v = -*v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(w: &mut [f64]) {
    let norm = dot(w, w).sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
}

fn symmetric_residual(w: &[f64], cw: &[f64], lambda: f64) -> f64 {
    w.iter()
        .zip(cw)
        .map(|(w, c)| (c - lambda * w).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Explicitly restarted Lanczos with full reorthogonalization.
struct Lanczos {
    basis: Vec<Vec<f64>>,
    size: usize,
}

impl Lanczos {
    fn new(n: usize, size: usize) -> Self {
        Self {
            basis: (0..size.max(2)).map(|_| vec![0.0; n]).collect(),
            size: size.max(2),
        }
    }

    /// Replaces `start` with the top Ritz vector of the Krylov space it
    /// generates and returns the Ritz value and the number of products.
    fn top_ritz(&mut self, op: &SymmetrizedOperator, start: &mut [f64], scratch: &mut [Vec<f64>; 2]) -> Result<(f64, usize)> {
        let n = start.len();
        self.basis[0].copy_from_slice(start);
        normalize(&mut self.basis[0]);
        let mut alpha = Vec::with_capacity(self.size);
        let mut beta = Vec::with_capacity(self.size);
        let mut next = vec![0.0; n];
        let mut k = 0;
        while k < self.size {
            op.apply(&self.basis[k], &mut next, scratch);
            let a = dot(&self.basis[k], &next);
            alpha.push(a);
            for (x, q) in next.iter_mut().zip(&self.basis[k]) {
                *x -= a * q;
            }
            if k > 0 {
                let b: f64 = beta[k - 1];
                for (x, q) in next.iter_mut().zip(&self.basis[k - 1]) {
                    *x -= b * q;
                }
            }
            for _ in 0..2 {
                for j in 0..=k {
                    let c = dot(&self.basis[j], &next);
                    for (x, q) in next.iter_mut().zip(&self.basis[j]) {
                        *x -= c * q;
                    }
                }
            }
            k += 1;
            let b = dot(&next, &next).sqrt();
            if k == self.size || b <= 1e-14 * a.abs().max(1.0) {
                break;
            }
            beta.push(b);
            for (dst, x) in self.basis[k].iter_mut().zip(&next) {
                *dst = x / b;
            }
        }
        let mut diag = alpha.clone();
        let mut off = beta.clone();
        off.resize(k, 0.0);
        let mut z: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| f64::from(i == j)).collect()).collect();
        tridiagonal::ql_implicit(&mut diag, &mut off, &mut z)?;
        let top = (0..k).max_by(|&i, &j| diag[i].total_cmp(&diag[j])).unwrap_or(0);
        start.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..k {
            let c = z[j][top];
            for (x, q) in start.iter_mut().zip(&self.basis[j]) {
                *x += c * q;
            }
        }
        normalize(start);
        Ok((diag[top], k))
    }
}

/// `(∫_{x_1 < 0} q, ∫_{x_1 > 0} q)`, with nodes on the mirror plane split evenly.
pub fn half_masses(grid: &Grid, weights: &[f64], q: &[f64]) -> (f64, f64) {
    let (mut left, mut right) = (0.0, 0.0);
    for idx in 0..grid.len() {
        let x1 = grid.coord(idx, 0);
        let m = weights[idx] * q[idx];
        if x1 < 0.0 {
            left += m;
        } else if x1 > 0.0 {
            right += m;
        } else {
            left += 0.5 * m;
            right += 0.5 * m;
        }
    }
    (left, right)
}

/// Discrete Rayleigh quotient
/// `(-D Σ_edges |∇(ψ √b)|² + Σ W m ψ²) / Σ W ψ²`,
/// with differences taken across grid edges so that the quotient is
/// consistent with the discrete eigenproblem.
pub fn rayleigh_quotient(land: &PhenotypeLandscape, grid: &Grid, diffusion: f64, psi: &GridField) -> Result<f64> {
    if psi.grid() != grid {
        return Err(Error::InvalidParameter("test field lives on a different grid".into()));
    }
    let op = SymmetrizedOperator::new(land, grid, diffusion)?;
    rayleigh_from_parts(&op, psi.values())
}

fn rayleigh_from_parts(op: &SymmetrizedOperator, psi: &[f64]) -> Result<f64> {
    let denom: f64 = op.weights.iter().zip(psi).map(|(w, p)| w * p * p).sum();
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter("Rayleigh quotient of a zero field".into()));
    }
    let v: Vec<f64> = psi.iter().zip(&op.birth).map(|(p, b)| p * b.sqrt()).collect();
    let energy = edge_energy(&op.grid, &v);
    let potential: f64 = (0..psi.len())
        .map(|i| op.weights[i] * op.fitness[i] * psi[i] * psi[i])
        .sum();
    Ok((-op.diffusion * energy + potential) / denom)
}

/// `Σ` over grid edges of `(transverse weight) * (Δv)² / h`.
fn edge_energy(grid: &Grid, v: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.dim() {
        let stride = grid.stride(k);
        let h = grid.spacing(k);
        let nk = grid.axis(k).nodes;
        for idx in 0..grid.len() {
            if grid.index_along(idx, k) + 1 == nk {
                continue;
            }
            let transverse: f64 = (0..grid.dim())
                .filter(|&j| j != k)
                .map(|j| grid.axis(j).weight(grid.index_along(idx, j)))
                .product();
            let diff = v[idx + stride] - v[idx];
            total += transverse * diff * diff / h;
        }
    }
    total
}

/// `(∫ m/b) / (∫ 1/b)`, the Rayleigh quotient of `1/√b`.
pub fn inverse_birth_bound(land: &PhenotypeLandscape, grid: &Grid) -> Result<f64> {
    let w = grid.weights();
    let b = grid.try_tabulate(|p| land.birth(p))?;
    let m = grid.try_tabulate(|p| land.fitness(p))?;
    let num: f64 = (0..grid.len()).map(|i| w[i] * m[i] / b[i]).sum();
    let den: f64 = (0..grid.len()).map(|i| w[i] / b[i]).sum();
    Ok(num / den)
}

/// `(1/b) / ∫(1/b)` on the grid.
pub fn inverse_birth_density(land: &PhenotypeLandscape, grid: &Grid) -> Result<GridField> {
    let values = grid.try_tabulate(|p| land.birth(p).map(|b| 1.0 / b))?;
    let mut field = GridField::new(grid.clone(), values)?;
    field.normalize()?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::RateTable;

    fn flat(grid: &Grid, m: f64) -> PhenotypeLandscape {
        let b = grid.tabulate(|p| 1.3 + 0.4 * (2.0 * p[0]).sin() + p.iter().skip(1).map(|y| 0.2 * y).sum::<f64>());
        let s: Vec<f64> = b.iter().map(|b| m + 1.0 - b).collect();
        PhenotypeLandscape::custom(RateTable::new(grid.clone(), b, s).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn flat_fitness_gives_inverse_birth() {
        for dim in [1, 2] {
            let grid = Grid::uniform(dim, -1.0, 1.0, 21).unwrap();
            let land = flat(&grid, 0.25);
            let sol = solve_stationary(&land, &grid, 1e-2).unwrap();
            assert!((sol.m_inf - 0.25).abs() < 1e-12);
            let exact = inverse_birth_density(&land, &grid).unwrap();
            assert!(sol.q_inf.l1_distance(&exact) < 1e-10);
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let land = PhenotypeLandscape::standard();
        let grid = Grid::uniform(2, -1.3, 1.3, 7).unwrap();
        let c = SymmetrizedOperator::new(&land, &grid, 2.4e-4).unwrap().to_dense();
        for i in 0..c.len() {
            for j in 0..c.len() {
                assert!((c[i][j] - c[j][i]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn shifted_operator_is_nonnegative() {
        let land = PhenotypeLandscape::standard();
        let grid = Grid::uniform(2, -1.3, 1.3, 9).unwrap();
        let op = SymmetrizedOperator::new(&land, &grid, 1e-2).unwrap();
        let sigma = op.shift();
        let c = op.to_dense();
        for (i, row) in c.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let entry = if i == j { v + sigma } else { *v };
                assert!(entry >= -1e-12);
            }
        }
    }

    #[test]
    fn constant_field_quotient() {
        let grid = Grid::uniform(2, -1.0, 1.0, 9).unwrap();
        let b = vec![1.5; grid.len()];
        let s = vec![0.5; grid.len()];
        let land = PhenotypeLandscape::custom(RateTable::new(grid.clone(), b, s).unwrap(), 1.2).unwrap();
        let psi = GridField::new(grid.clone(), vec![3.0; grid.len()]).unwrap();
        let q = rayleigh_quotient(&land, &grid, 0.1, &psi).unwrap();
        assert!((q - 0.8).abs() < 1e-14);
        let zero = GridField::zeros(grid.clone());
        assert!(rayleigh_quotient(&land, &grid, 0.1, &zero).is_err());
    }
}
