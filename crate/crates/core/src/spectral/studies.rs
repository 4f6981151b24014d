//! Parameter studies built on the stationary solver.

use serde::Serialize;

use super::{explicit_1d, inverse_birth_bound, inverse_birth_density, solve_stationary, SpectralSolution};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid, GridField};
use crate::landscape::{Domain, PhenotypeLandscape};

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    /// `(D, ‖q_inf - (1/b)/∫(1/b)‖₁)`.
    pub points: Vec<(f64, f64)>,
    pub non_increasing: bool,
    pub strictly_decreasing: bool,
    pub below_threshold: bool,
}

fn check_increasing(list: &[f64]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidParameter("empty list of D values".into()));
    }
    if list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("D values must be strictly increasing".into()));
    }
    Ok(())
}

/// L¹ distance from `q_inf` to `C/b` along an increasing list of `D`.
pub fn large_d_limit_check(
    land: &PhenotypeLandscape,
    grid: &Grid,
    d_list: &[f64],
    threshold: f64,
) -> Result<LimitReport> {
    check_increasing(d_list)?;
    let target = inverse_birth_density(land, grid)?;
    let mut points = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let sol = solve_stationary(land, grid, d)?;
        points.push((d, sol.q_inf.l1_distance(&target)));
    }
    let dist: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(LimitReport {
        non_increasing: dist.windows(2).all(|w| w[1] <= w[0]),
        strictly_decreasing: dist.windows(2).all(|w| w[1] < w[0]),
        below_threshold: dist.last().is_some_and(|&v| v <= threshold),
        points,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    /// `(D, m̄∞)`.
    pub points: Vec<(f64, f64)>,
    /// `(∫ m/b) / (∫ 1/b)`.
    pub lower_bound: f64,
    pub strictly_decreasing: bool,
    pub above_bound: bool,
    /// Largest `|Q[√b q_inf] - m̄∞|` over the list.
    pub max_rayleigh_gap: f64,
}

pub fn monotonicity_in_d(land: &PhenotypeLandscape, grid: &Grid, d_list: &[f64]) -> Result<MonotonicityReport> {
    check_increasing(d_list)?;
    let lower_bound = inverse_birth_bound(land, grid)?;
    let mut points = Vec::with_capacity(d_list.len());
    let mut gap: f64 = 0.0;
    for &d in d_list {
        let sol = solve_stationary(land, grid, d)?;
        gap = gap.max((sol.rayleigh - sol.m_inf).abs());
        points.push((d, sol.m_inf));
    }
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(MonotonicityReport {
        strictly_decreasing: values.windows(2).all(|w| w[1] < w[0]),
        above_bound: values.iter().all(|&v| v >= lower_bound),
        lower_bound,
        max_rayleigh_gap: gap,
        points,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PiecewiseReport {
    pub m_inf_numeric: f64,
    pub m_inf_exact: f64,
    pub eigenvalue_error: f64,
    /// L¹ distance on `[-a, a]` after renormalizing the numeric density there.
    pub l1_error: f64,
    /// `∫_{-a}^0 q / ∫_0^a q` of the numeric density.
    pub mass_ratio_numeric: f64,
    pub mass_ratio_exact: f64,
    #[serde(skip)]
    pub solution: SpectralSolution,
}

/// Domain half-width, relative to `a`, used for the exterior layer.
pub const PIECEWISE_MARGIN: f64 = 1.05;

/// Solves the piecewise-constant landscape with a strongly deleterious
/// exterior on `(-1.05 a, 1.05 a)` and compares with the closed form.
pub fn piecewise_validation(diffusion: f64, a: f64, big_m: f64, r: f64, nodes: usize) -> Result<PiecewiseReport> {
    let half = PIECEWISE_MARGIN * a;
    let land = PhenotypeLandscape::piecewise_constant(a, big_m, r)?.with_domain(Domain::cube(1, -half, half))?;
    let grid = Grid::new(vec![Axis::new(-half, half, nodes)?])?;
    let solution = solve_stationary(&land, &grid, diffusion)?;
    let exact = explicit_1d(diffusion, a, r)?;
    compare_restricted(&solution, &grid, a, |x| exact.density(x)).map(|(l1, left, right)| PiecewiseReport {
        m_inf_numeric: solution.m_inf,
        m_inf_exact: exact.m_inf,
        eigenvalue_error: (solution.m_inf - exact.m_inf).abs(),
        l1_error: l1,
        mass_ratio_numeric: left / right,
        mass_ratio_exact: exact.mass_ratio,
        solution: solution.clone(),
    })
}

/// Restricts the numeric density to `[-a, a]`, renormalizes, and returns the
/// L¹ distance to `reference` together with the left and right masses.
pub fn compare_restricted(
    solution: &SpectralSolution,
    grid: &Grid,
    a: f64,
    reference: impl Fn(f64) -> f64,
) -> Result<(f64, f64, f64)> {
    let q: &GridField = &solution.q_inf;
    let w = grid.weights();
    let inside: Vec<usize> = (0..grid.len()).filter(|&i| grid.coord(i, 0).abs() <= a).collect();
    if inside.len() < 3 {
        return Err(Error::InvalidParameter("grid does not resolve the interval (-a, a)".into()));
    }
    let mass: f64 = inside.iter().map(|&i| w[i] * q.values()[i]).sum();
    let (mut l1, mut left, mut right) = (0.0, 0.0, 0.0);
    for &i in &inside {
        let x = grid.coord(i, 0);
        let v = q.values()[i] / mass;
        l1 += w[i] * (v - reference(x)).abs();
        if x < 0.0 {
            left += w[i] * v;
        } else if x > 0.0 {
            right += w[i] * v;
        } else {
            left += 0.5 * w[i] * v;
            right += 0.5 * w[i] * v;
        }
    }
    Ok((l1, left, right))
}
