//! Second-order Laplacian with even-reflection ghost nodes, so the discrete
//! normal derivative of the operand vanishes on the boundary.
//!
//! Neighbour pairs are always summed before the centre term is subtracted.
//! Floating-point addition is commutative, so the result at a node and at its
//! mirror image are bitwise equal when the operand is mirror symmetric.

use crate::grid::Grid;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many nodes the row sweep runs serially.
#[cfg(feature = "parallel")]
const PARALLEL_THRESHOLD: usize = 1 << 14;

pub fn neumann_laplacian(grid: &Grid, u: &[f64], out: &mut [f64]) {
    debug_assert_eq!(u.len(), grid.len());
    debug_assert_eq!(out.len(), grid.len());
    match grid.dim() {
        1 => laplacian_1d(u, out, 1.0 / grid.spacing(0).powi(2)),
        _ => laplacian_2d(grid, u, out),
    }
}

fn laplacian_1d(u: &[f64], out: &mut [f64], inv_h2: f64) {
    let n = u.len();
    out[0] = ((u[1] + u[1]) - 2.0 * u[0]) * inv_h2;
    for i in 1..n - 1 {
        out[i] = ((u[i - 1] + u[i + 1]) - 2.0 * u[i]) * inv_h2;
    }
    out[n - 1] = ((u[n - 2] + u[n - 2]) - 2.0 * u[n - 1]) * inv_h2;
}

fn laplacian_2d(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n0 = grid.axis(0).nodes;
    let n1 = grid.axis(1).nodes;
    let ih0 = 1.0 / grid.spacing(0).powi(2);
    let ih1 = 1.0 / grid.spacing(1).powi(2);
    let row = |i: usize, dst: &mut [f64]| {
        let up = if i == 0 { 1 } else { i - 1 };
        let down = if i + 1 == n0 { n0 - 2 } else { i + 1 };
        let c = &u[i * n1..(i + 1) * n1];
        let a = &u[up * n1..(up + 1) * n1];
        let b = &u[down * n1..(down + 1) * n1];
        for j in 0..n1 {
            let left = if j == 0 { c[1] } else { c[j - 1] };
            let right = if j + 1 == n1 { c[n1 - 2] } else { c[j + 1] };
            let centre = 2.0 * c[j];
            dst[j] = ((a[j] + b[j]) - centre) * ih0 + ((left + right) - centre) * ih1;
        }
    };
    #[cfg(feature = "parallel")]
    if u.len() >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(n1)
            .enumerate()
            .for_each(|(i, dst)| row(i, dst));
        return;
    }
    for (i, dst) in out.chunks_mut(n1).enumerate() {
        row(i, dst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::test_support::pseudo_random;

    #[test]
    fn quadratic_is_differentiated_exactly_inside() {
        let grid = Grid::uniform(2, -1.0, 1.0, 11).unwrap();
        let u = grid.tabulate(|p| p[0] * p[0] + 3.0 * p[1] * p[1]);
        let mut out = vec![0.0; grid.len()];
        neumann_laplacian(&grid, &u, &mut out);
        for idx in 0..grid.len() {
            if !grid.on_boundary(idx) {
                assert!((out[idx] - 8.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trapezoid_weighted_sum_vanishes() {
        let grid = Grid::uniform(2, -1.3, 1.3, 9).unwrap();
        let u = pseudo_random(grid.len(), 7);
        let mut out = vec![0.0; grid.len()];
        neumann_laplacian(&grid, &u, &mut out);
        let w = grid.weights();
        let total: f64 = w.iter().zip(&out).map(|(w, v)| w * v).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn commutes_with_mirror() {
        let grid = Grid::uniform(2, -1.3, 1.3, 13).unwrap();
        let mut u = pseudo_random(grid.len(), 3);
        for idx in 0..grid.len() {
            let m = grid.mirror_index(idx);
            if m < idx {
                u[idx] = u[m];
            }
        }
        let mut out = vec![0.0; grid.len()];
        neumann_laplacian(&grid, &u, &mut out);
        for idx in 0..grid.len() {
            assert_eq!(out[idx], out[grid.mirror_index(idx)]);
        }
    }
}
