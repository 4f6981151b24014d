//! Semi-analytic diagnostics: the initial bias of the mean phenotype, the
//! asymmetry threshold `γ*` and the mutation loads behind it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::landscape::PhenotypeLandscape;
use crate::pde::{integrate, IntegrateOptions, Model, Operator};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BiasSign {
    TowardBirth,
    TowardSurvival,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct BiasReport {
    /// `D ∫_{x_1 > 0} (b - s) q0 Δ(x_1 m)`, the initial curvature of `x̄_1`.
    pub integral_value: f64,
    /// Half-width of the band classified as indeterminate.
    pub tolerance: f64,
    pub predicted_sign: BiasSign,
    /// Sign of `Δ(x_1 m)` on `{x_1 > 0}`, zero elsewhere.
    #[serde(skip)]
    pub laplacian_sign_map: GridField,
    /// Whether `Δ(x_1 m)` keeps one sign on the support of `q0` in `{x_1 > 0}`.
    pub single_signed: bool,
}

/// Relative level below which `q0` counts as outside its support.
const SUPPORT_LEVEL: f64 = 1e-12;

/// Second-order centered approximation of `Δ(x_1 m)` at `x`, written through
/// the discrete product rule so that a constant `m` gives exactly zero.
pub fn laplacian_of_x1_fitness(land: &PhenotypeLandscape, x: &[f64], spacing: &[f64]) -> f64 {
    let m0 = land.fitness_unchecked(x);
    let mut p = x.to_vec();
    let mut total = 0.0;
    for (k, &h) in spacing.iter().enumerate() {
        p[k] = x[k] + h;
        let plus = land.fitness_unchecked(&p);
        p[k] = x[k] - h;
        let minus = land.fitness_unchecked(&p);
        p[k] = x[k];
        total += x[0] * ((plus + minus) - 2.0 * m0) / (h * h);
        if k == 0 {
            total += (plus - minus) / h;
        }
    }
    total
}

fn check_symmetric_support(q0: &GridField) -> Result<()> {
    let grid = q0.grid();
    if !grid.is_mirror_symmetric() {
        return Err(Error::Precondition("the grid is not symmetric about x_1 = 0".into()));
    }
    let top = q0.max_abs();
    let asym = (0..grid.len())
        .map(|i| (q0.values()[i] - q0.values()[grid.mirror_index(i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-8 * top {
        return Err(Error::Precondition(format!(
            "initial density is not symmetric about x_1 = 0 (max mismatch {asym:e})"
        )));
    }
    let w = grid.weights();
    let edge_mass: f64 = (0..grid.len())
        .filter(|&i| grid.nodes_from_boundary(i) < 2)
        .map(|i| w[i] * q0.values()[i].abs())
        .sum();
    if edge_mass > 1e-8 * q0.mass().abs() {
        return Err(Error::Precondition(format!(
            "initial density is not compactly supported (mass {edge_mass:e} within two nodes of the boundary)"
        )));
    }
    Ok(())
}

pub fn initial_bias(land: &PhenotypeLandscape, q0: &GridField, diffusion: f64) -> Result<BiasReport> {
    check_symmetric_support(q0)?;
    let grid = q0.grid();
    let spacing: Vec<f64> = (0..grid.dim()).map(|k| grid.spacing(k)).collect();
    let w = grid.weights();
    let mass = q0.mass();
    let top = q0.max_abs();
    let mut signs = vec![0.0; grid.len()];
    let mut integral = 0.0;
    let mut weighted_l1 = 0.0;
    let mut lap_max: f64 = 0.0;
    let (mut pos, mut neg) = (false, false);
    let mut p = vec![0.0; grid.dim()];
    for idx in 0..grid.len() {
        grid.point_into(idx, &mut p);
        if p[0] <= 0.0 {
            continue;
        }
        let lap = laplacian_of_x1_fitness(land, &p, &spacing);
        signs[idx] = if lap > 0.0 {
            1.0
        } else if lap < 0.0 {
            -1.0
        } else {
            0.0
        };
        let q = q0.values()[idx] / mass;
        if q < SUPPORT_LEVEL * top / mass {
            continue;
        }
        pos |= lap > 0.0;
        neg |= lap < 0.0;
        let gap = land.birth_unchecked(&p) - land.survival_unchecked(&p);
        integral += w[idx] * gap * q * lap;
        weighted_l1 += w[idx] * (gap * q).abs();
        lap_max = lap_max.max(lap.abs());
    }
    let integral_value = diffusion * integral;
    let h2 = grid.min_spacing().powi(2);
    let tolerance = 10.0 * h2 * diffusion * weighted_l1 * lap_max;
    let predicted_sign = if integral_value > tolerance {
        BiasSign::TowardBirth
    } else if integral_value < -tolerance {
        BiasSign::TowardSurvival
    } else {
        BiasSign::Indeterminate
    };
    Ok(BiasReport {
        integral_value,
        tolerance,
        predicted_sign,
        laplacian_sign_map: GridField::new(grid.clone(), signs)?,
        single_signed: !(pos && neg),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialDynamics {
    pub slope: f64,
    pub curvature: f64,
    pub dt: f64,
}

/// Runs the birth-weighted model for two steps and finite-differences
/// `x̄_1` at `0, dt, 2 dt`. `dt` defaults to one stable integrator step.
pub fn verify_initial_dynamics(
    land: &PhenotypeLandscape,
    q0: &GridField,
    diffusion: f64,
    dt_probe: Option<f64>,
) -> Result<InitialDynamics> {
    check_symmetric_support(q0)?;
    let model = Model::qb(diffusion)?;
    let options = IntegrateOptions::default();
    let dt = match dt_probe {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidParameter(format!("probe step must be positive, got {dt}"))),
        None => Operator::new(model, land, q0.grid())?.max_time_step(options.stability_factor),
    };
    let run = integrate(model, land, q0, 2.0 * dt, &[0.0, dt, 2.0 * dt], &options)?;
    let x = run.trajectory.xbar1();
    Ok(InitialDynamics {
        slope: (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt),
        curvature: (x[0] - 2.0 * x[1] + x[2]) / (dt * dt),
        dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaThreshold {
    pub n: usize,
    pub diffusion: f64,
    pub sigma: f64,
    pub b0: f64,
    pub gamma_star: f64,
}

/// Root in `[1, 2]` of `γ - 1 = (n √(2D) / (2σ)) (√(γ (b0 + 1)) - √b0)`:
/// below it the fitness gap between the peaks is smaller than the gap
/// between their mutation loads.
pub fn gamma_threshold(n: usize, diffusion: f64, sigma: f64, b0: f64) -> Result<GammaThreshold> {
    if n == 0 || !(diffusion > 0.0 && sigma > 0.0 && b0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold needs positive n, D, sigma and b0 (got {n}, {diffusion}, {sigma}, {b0})"
        )));
    }
    let k = n as f64 * (2.0 * diffusion).sqrt() / (2.0 * sigma);
    let f = |g: f64| g - 1.0 - k * ((g * (b0 + 1.0)).sqrt() - b0.sqrt());
    let (mut lo, mut hi) = (1.0, 2.0);
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(Error::OutOfRange(format!(
            "no threshold in [1, 2] for n = {n}, D = {diffusion}, sigma = {sigma}, b0 = {b0}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GammaThreshold {
        n,
        diffusion,
        sigma,
        b0,
        gamma_star: 0.5 * (lo + hi),
    })
}

/// Equilibrium mutation loads `(n √(2D(b0+1)γ) / (2σ), n √(2D b0) / (2σ))`
/// around the birth and the survival optimum.
pub fn mutation_loads(n: usize, diffusion: f64, sigma: f64, b0: f64, gamma: f64) -> Result<(f64, f64)> {
    if n == 0 || !(diffusion > 0.0 && sigma > 0.0 && b0 > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter("mutation loads need positive parameters".into()));
    }
    let scale = n as f64 / (2.0 * sigma);
    Ok((
        scale * (2.0 * diffusion * (b0 + 1.0) * gamma).sqrt(),
        scale * (2.0 * diffusion * b0).sqrt(),
    ))
}

/// Location of the first sign change of `left - right` along a sweep of
/// `(γ, left_mass, right_mass)`, by linear interpolation.
pub fn dominance_switch(points: &[(f64, f64, f64)]) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (g0, l0, r0) = w[0];
        let (g1, l1, r1) = w[1];
        let (d0, d1) = (l0 - r0, l1 - r1);
        (d0 > 0.0 && d1 <= 0.0).then(|| g0 + (g1 - g0) * d0 / (d0 - d1))
    })
}

/// Log-slope profile of the mean-fitness gap `m̄(T) - m̄(t)`.
#[derive(Clone, Debug, Serialize)]
pub struct PlateauReport {
    /// `(t, |d log(m̄(T) - m̄(t)) / dt|)` at interior samples.
    pub slopes: Vec<(f64, f64)>,
    /// Time and value of the smallest interior slope.
    pub t_min: f64,
    pub min_slope: f64,
    /// Largest slopes before and after `t_min`.
    pub left_max: f64,
    pub right_max: f64,
    /// The slope dips and recovers: neither monotone direction holds.
    pub non_monotone: bool,
    /// `min_slope` is below `ratio` times both flanking maxima.
    pub detected: bool,
}

/// Looks for a plateau of the mean fitness: an interior window where the
/// log-slope of the gap to the final value drops well below its values on
/// both sides.
///
/// Samples after `cutoff * T` are ignored, since the gap itself goes to
/// zero at `T` and its logarithm is dominated by the subtraction there.
pub fn detect_plateau(traj: &Trajectory, ratio: f64, cutoff: f64) -> Result<PlateauReport> {
    if !(ratio > 0.0 && ratio < 1.0) || !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::InvalidParameter(format!("ratio {ratio} and cutoff {cutoff} must lie in (0, 1)")));
    }
    let n = traj.len();
    if n < 5 {
        return Err(Error::Precondition("need at least five samples".into()));
    }
    let horizon = traj.times[n - 1];
    let start = traj.times[0];
    let last_m = traj.mbar[n - 1];
    let keep: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.mbar)
        .take_while(|(t, _)| **t <= start + cutoff * (horizon - start))
        .map(|(&t, &m)| (t, last_m - m))
        .filter(|p| p.1 > 0.0)
        .map(|(t, g)| (t, g.ln()))
        .collect();
    let slopes: Vec<(f64, f64)> = keep
        .windows(3)
        .map(|w| (w[1].0, ((w[2].1 - w[0].1) / (w[2].0 - w[0].0)).abs()))
        .collect();
    if slopes.len() < 3 {
        return Err(Error::Precondition("too few samples with a positive gap".into()));
    }
    let inner = &slopes[1..slopes.len() - 1];
    let (k, &(t_min, min_slope)) = inner
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let k = k + 1;
    let left_max = slopes[..k].iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let right_max = slopes[k + 1..].iter().map(|p| p.1).fold(f64::MIN, f64::max);
    Ok(PlateauReport {
        t_min,
        min_slope,
        left_max,
        right_max,
        non_monotone: min_slope < left_max && min_slope < right_max,
        detected: min_slope < ratio * left_max && min_slope < ratio * right_max,
        slopes,
    })
}
