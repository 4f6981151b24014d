//! Browser bindings: the closed-form 1D stationary state, the asymmetry
//! threshold, and a small one-dimensional PDE run.

use bdmut::analysis;
use bdmut::grid::Grid;
use bdmut::pde::{self, initial_condition, IntegrateOptions, Model, ModelKind};
use bdmut::spectral;
use bdmut::PhenotypeLandscape;
use wasm_bindgen::prelude::*;

fn js_err(e: bdmut::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct ExplicitRoot {
    pub root: f64,
    pub m_inf: f64,
    pub mass_ratio: f64,
    pub lower_bound: f64,
}

/// Closed-form stationary state of the piecewise-constant landscape.
#[wasm_bindgen]
pub fn explicit_root(diffusion: f64, a: f64, r: f64) -> Result<ExplicitRoot, JsError> {
    let s = spectral::explicit_1d(diffusion, a, r).map_err(js_err)?;
    Ok(ExplicitRoot {
        root: s.a_b_root,
        m_inf: s.m_inf,
        mass_ratio: s.mass_ratio,
        lower_bound: spectral::mass_ratio_lower_bound(),
    })
}

/// Birth-peak scaling above which the birth optimum dominates at
/// equilibrium.
#[wasm_bindgen]
pub fn gamma_threshold(dim: usize, diffusion: f64, sigma_sq: f64, b0: f64) -> Result<f64, JsError> {
    analysis::gamma_threshold(dim, diffusion, sigma_sq.sqrt(), b0)
        .map(|g| g.gamma_star)
        .map_err(js_err)
}

#[wasm_bindgen]
pub struct Run1d {
    times: Vec<f64>,
    xbar: Vec<f64>,
    mbar: Vec<f64>,
    coords: Vec<f64>,
    density: Vec<f64>,
    stationary: Vec<f64>,
}

#[wasm_bindgen]
impl Run1d {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn xbar(&self) -> Vec<f64> {
        self.xbar.clone()
    }

    pub fn mbar(&self) -> Vec<f64> {
        self.mbar.clone()
    }

    pub fn coords(&self) -> Vec<f64> {
        self.coords.clone()
    }

    /// Density at the horizon.
    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }

    /// Principal eigenfunction on the same grid.
    pub fn stationary(&self) -> Vec<f64> {
        self.stationary.clone()
    }
}

/// 1D two-peak landscape run from `x0` with `samples + 1` equally spaced
/// observations. `birth_weighted` selects between the two mutation models.
#[wasm_bindgen]
pub fn run_1d(
    birth_weighted: bool,
    diffusion: f64,
    sigma_sq: f64,
    x0: f64,
    horizon: f64,
    samples: usize,
    nodes: usize,
) -> Result<Run1d, JsError> {
    let land = PhenotypeLandscape::gaussian_two_peak(1, 0.5, vec![sigma_sq], 0.7, 1.7).map_err(js_err)?;
    let grid = Grid::uniform(1, -1.3, 1.3, nodes).map_err(js_err)?;
    let q0 = initial_condition(&grid, &[x0], 2.0 * grid.min_spacing()).map_err(js_err)?;
    let kind = if birth_weighted { ModelKind::QB } else { ModelKind::QStand };
    let samples = samples.max(1);
    let mut times: Vec<f64> = (0..samples).map(|i| horizon * i as f64 / samples as f64).collect();
    times.push(horizon);
    times.dedup();
    let model = Model::new(kind, diffusion).map_err(js_err)?;
    let run = pde::integrate(model, &land, &q0, horizon, &times, &IntegrateOptions::default()).map_err(js_err)?;
    let stationary = if birth_weighted {
        spectral::solve_stationary(&land, &grid, diffusion).map_err(js_err)?.q_inf.into_values()
    } else {
        Vec::new()
    };
    Ok(Run1d {
        xbar: run.trajectory.xbar1(),
        mbar: run.trajectory.mbar.clone(),
        times: run.trajectory.times,
        coords: (0..grid.len()).map(|i| grid.coord(i, 0)).collect(),
        density: run.field.into_values(),
        stationary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_has_the_requested_samples() {
        let run = run_1d(true, 1e-3, 0.1, 0.0, 5.0, 10, 81).unwrap();
        assert_eq!(run.times().len(), 11);
        assert_eq!(run.density().len(), 81);
        assert_eq!(run.stationary().len(), 81);
        assert!(run.xbar()[10] > 0.0);
    }

    #[test]
    fn threshold_and_root() {
        let g = gamma_threshold(2, 0.00025, 0.1, 0.7).unwrap();
        assert!((g - 1.0346).abs() < 1e-3);
        let e = explicit_root(1e-3, 1.0, 2.0).unwrap();
        assert!(e.mass_ratio > e.lower_bound);
    }
}
