//! Method-of-lines solvers for the birth-weighted model
//! `q_t = D Δ(b q) + q (m - m̄)` and the standard model `q_t = D Δq + q (m - m̄)`
//! with zero-flux boundaries.

mod stencil;

pub use stencil::neumann_laplacian;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{weighted_sum, weighted_sums, Grid, GridField};
use crate::landscape::PhenotypeLandscape;
use crate::trajectory::Trajectory;

/// Largest undershoot silently clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Magnitudes below this are flushed to zero after each step to keep
/// subnormal arithmetic out of the far tails.
const FLUSH_BELOW: f64 = 1e-280;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// Mutation operator `D Δ(b q)`: mutants appear at a rate proportional to birth.
    QB,
    /// Mutation operator `D Δq`.
    QStand,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Model {
    pub kind: ModelKind,
    pub diffusion: f64,
}

impl Model {
    pub fn new(kind: ModelKind, diffusion: f64) -> Result<Self> {
        if !(diffusion.is_finite() && diffusion > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mutational parameter D must be positive, got {diffusion}"
            )));
        }
        Ok(Self { kind, diffusion })
    }

    pub fn qb(diffusion: f64) -> Result<Self> {
        Self::new(ModelKind::QB, diffusion)
    }

    pub fn qstand(diffusion: f64) -> Result<Self> {
        Self::new(ModelKind::QStand, diffusion)
    }
}

/// The semi-discrete right-hand side, with the landscape sampled at the nodes.
#[derive(Clone, Debug)]
pub struct Operator {
    grid: Grid,
    model: Model,
    /// `b` for the birth-weighted model, `1` for the standard one.
    mutation_weight: Vec<f64>,
    fitness: Vec<f64>,
    weights: Vec<f64>,
    /// Quadrature weight times fitness, for the mean-fitness reduction.
    weighted_fitness: Vec<f64>,
}

impl Operator {
    pub fn new(model: Model, land: &PhenotypeLandscape, grid: &Grid) -> Result<Self> {
        if land.dim != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "landscape dimension {} does not match grid dimension {}",
                land.dim,
                grid.dim()
            )));
        }
        let birth = grid.try_tabulate(|p| land.birth(p))?;
        if let Some(b) = birth.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "birth rate must be positive on the grid, found {b}"
            )));
        }
        let mutation_weight = match model.kind {
            ModelKind::QB => birth,
            ModelKind::QStand => vec![1.0; grid.len()],
        };
        let fitness = grid.try_tabulate(|p| land.fitness(p))?;
        let weights = grid.weights();
        let weighted_fitness = weights.iter().zip(&fitness).map(|(w, m)| w * m).collect();
        Ok(Self {
            grid: grid.clone(),
            model,
            mutation_weight,
            fitness,
            weights,
            weighted_fitness,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_mutation_weight(&self) -> f64 {
        self.mutation_weight.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Largest stable step for a given safety factor.
    pub fn max_time_step(&self, stability_factor: f64) -> f64 {
        let h2 = self.grid.min_spacing().powi(2);
        let n = self.grid.dim() as f64;
        stability_factor * h2 / (2.0 * n * self.model.diffusion * self.max_mutation_weight())
    }

    /// Quadrature mean of the fitness, normalized by the mass of `q`.
    pub fn mean_fitness(&self, q: &[f64]) -> f64 {
        let (mass, mq) = weighted_sums(&self.weights, &self.weighted_fitness, q);
        mq / mass
    }

    /// Writes `dq/dt` into `out`, using `scratch` for the product `b q`.
    /// Returns the mean fitness used in the replicator term.
    pub fn rhs_into(&self, q: &[f64], scratch: &mut [f64], out: &mut [f64]) -> f64 {
        let mbar = self.mean_fitness(q);
        let d = self.model.diffusion;
        if self.grid.dim() == 1 {
            self.rhs_1d(q, mbar, scratch, out);
            return mbar;
        }
        let operand: &[f64] = match self.model.kind {
            ModelKind::QB => {
                for ((u, b), q) in scratch.iter_mut().zip(&self.mutation_weight).zip(q) {
                    *u = b * q;
                }
                scratch
            }
            ModelKind::QStand => q,
        };
        neumann_laplacian(&self.grid, operand, out);
        for ((o, q), m) in out.iter_mut().zip(q).zip(&self.fitness) {
            *o = d * *o + q * (m - mbar);
        }
        mbar
    }

    /// 1D stencil over offset slices, which the compiler vectorizes; same
    /// arithmetic as the generic path.
    fn rhs_1d(&self, q: &[f64], mbar: f64, scratch: &mut [f64], out: &mut [f64]) {
        let n = q.len();
        let d = self.model.diffusion;
        let ih = 1.0 / self.grid.spacing(0).powi(2);
        let u: &[f64] = match self.model.kind {
            ModelKind::QB => {
                for ((u, b), q) in scratch.iter_mut().zip(&self.mutation_weight).zip(q) {
                    *u = b * q;
                }
                scratch
            }
            ModelKind::QStand => q,
        };
        let m = &self.fitness;
        out[0] = d * (((u[1] + u[1]) - 2.0 * u[0]) * ih) + q[0] * (m[0] - mbar);
        for ((((o, left), right), (centre, q)), m) in out[1..n - 1]
            .iter_mut()
            .zip(&u[..n - 2])
            .zip(&u[2..])
            .zip(u[1..n - 1].iter().zip(&q[1..n - 1]))
            .zip(&m[1..n - 1])
        {
            *o = d * (((left + right) - 2.0 * centre) * ih) + q * (m - mbar);
        }
        out[n - 1] = d * (((u[n - 2] + u[n - 2]) - 2.0 * u[n - 1]) * ih) + q[n - 1] * (m[n - 1] - mbar);
    }
}

/// `dq/dt` for the given model, landscape and density.
pub fn rhs(model: Model, land: &PhenotypeLandscape, q: &GridField) -> Result<GridField> {
    let op = Operator::new(model, land, q.grid())?;
    let mut scratch = vec![0.0; q.grid().len()];
    let mut out = vec![0.0; q.grid().len()];
    op.rhs_into(q.values(), &mut scratch, &mut out);
    GridField::new(q.grid().clone(), out)
}

pub fn mean_phenotype(q: &GridField) -> Vec<f64> {
    let grid = q.grid();
    let w = grid.weights();
    let mass = weighted_sum(&w, q.values());
    (0..grid.dim())
        .map(|k| {
            let s: f64 = (0..grid.len())
                .map(|idx| w[idx] * grid.coord(idx, k) * q.values()[idx])
                .sum();
            s / mass
        })
        .collect()
}

pub fn mean_fitness(land: &PhenotypeLandscape, q: &GridField) -> Result<f64> {
    let grid = q.grid();
    let w = grid.weights();
    let m = grid.try_tabulate(|p| land.fitness(p))?;
    let mass = weighted_sum(&w, q.values());
    let mq: f64 = (0..grid.len()).map(|i| w[i] * m[i] * q.values()[i]).sum();
    Ok(mq / mass)
}

/// Isotropic Gaussian bump of standard deviation `width` at `center`,
/// normalized to unit mass.
pub fn initial_condition(grid: &Grid, center: &[f64], width: f64) -> Result<GridField> {
    if center.len() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "center has {} coordinates, grid has dimension {}",
            center.len(),
            grid.dim()
        )));
    }
    let inside = grid
        .axes()
        .iter()
        .zip(center)
        .all(|(a, &c)| c >= a.lo && c <= a.hi);
    if !inside {
        return Err(Error::OutsideDomain {
            point: center.to_vec(),
        });
    }
    let h = grid.min_spacing();
    if !(width >= 0.5 * h) {
        return Err(Error::UnderResolved { width, spacing: h });
    }
    let values = grid.tabulate(|p| {
        let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
        (-d2 / (2.0 * width * width)).exp()
    });
    let mut field = GridField::new(grid.clone(), values)?;
    field.normalize()?;
    Ok(field)
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub stability_factor: f64,
    /// Times at which the full field is kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stability_factor: 0.4,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub field: GridField,
    pub snapshots: Vec<(f64, GridField)>,
    /// Largest `|mass - 1|` seen before a renormalization.
    pub max_mass_drift: f64,
    /// Largest `|mass - 1| / dt` over all steps.
    pub max_drift_rate: f64,
    pub steps: usize,
    /// The stability-bound step; actual steps never exceed it.
    pub max_dt: f64,
}

/// Classical RK4 with fixed step, per-step renormalization and sampling at
/// exactly the requested times.
pub fn integrate(
    model: Model,
    land: &PhenotypeLandscape,
    q0: &GridField,
    horizon: f64,
    sample_times: &[f64],
    options: &IntegrateOptions,
) -> Result<Integration> {
    let op = Operator::new(model, land, q0.grid())?;
    integrate_with(&op, q0, horizon, sample_times, options)
}

pub fn integrate_with(
    op: &Operator,
    q0: &GridField,
    horizon: f64,
    sample_times: &[f64],
    options: &IntegrateOptions,
) -> Result<Integration> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(options.stability_factor > 0.0 && options.stability_factor <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stability factor must lie in (0, 1], got {}",
            options.stability_factor
        )));
    }
    for list in [sample_times, &options.snapshot_times[..]] {
        if list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
        }
        if list.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::InvalidParameter(format!(
                "sample times must lie in [0, {horizon}]"
            )));
        }
    }
    if op.grid() != q0.grid() {
        return Err(Error::InvalidParameter("initial field lives on a different grid".into()));
    }

    let n = q0.grid().len();
    let mut q = q0.values().to_vec();
    if let Some((node, &value)) = q.iter().enumerate().find(|(_, v)| **v < -NEGATIVE_TOLERANCE) {
        return Err(Error::Monotonicity {
            step: 0,
            time: 0.0,
            node,
            value,
        });
    }
    q.iter_mut().for_each(|v| *v = v.max(0.0));
    let initial_mass = weighted_sum(op.weights(), &q);
    if !(initial_mass > 0.0 && initial_mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial mass must be positive, got {initial_mass}")));
    }
    q.iter_mut().for_each(|v| *v /= initial_mass);

    // Breakpoints: the union of sample and snapshot times plus the horizon.
    let mut stops: Vec<f64> = sample_times
        .iter()
        .chain(&options.snapshot_times)
        .copied()
        .chain(std::iter::once(horizon))
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let max_dt = op.max_time_step(options.stability_factor);
    let grid = q0.grid().clone();
    let mut trajectory = Trajectory::new();
    let mut snapshots = Vec::new();
    let mut stepper = Rk4::new(n);
    let mut last_mass = initial_mass;
    let mut max_mass_drift: f64 = 0.0;
    let mut max_drift_rate: f64 = 0.0;
    let mut steps = 0usize;
    let mut t = 0.0;
    let mut sample_iter = sample_times.iter().peekable();
    let mut snapshot_iter = options.snapshot_times.iter().peekable();

    let mut record = |t: f64, q: &[f64], mass: f64, trajectory: &mut Trajectory, snapshots: &mut Vec<(f64, GridField)>| -> Result<()> {
        if sample_iter.next_if(|&&s| s == t).is_some() {
            let field = GridField::new(grid.clone(), q.to_vec())?;
            trajectory.push(t, mean_phenotype(&field), op.mean_fitness(q), mass);
        }
        if snapshot_iter.next_if(|&&s| s == t).is_some() {
            snapshots.push((t, GridField::new(grid.clone(), q.to_vec())?));
        }
        Ok(())
    };

    for &stop in &stops {
        if stop > t {
            let span = stop - t;
            let substeps = ((span / max_dt) - 1e-9).ceil().max(1.0) as usize;
            let dt = span / substeps as f64;
            for k in 0..substeps {
                stepper.step(op, &mut q, dt);
                steps += 1;
                let now = if k + 1 == substeps { stop } else { t + (k + 1) as f64 * dt };
                let mass = finish_step(op, &mut q, steps, now)?;
                let drift = (mass - 1.0).abs();
                max_mass_drift = max_mass_drift.max(drift);
                max_drift_rate = max_drift_rate.max(drift / dt);
                last_mass = mass;
            }
            t = stop;
        }
        record(t, &q, last_mass, &mut trajectory, &mut snapshots)?;
    }

    Ok(Integration {
        trajectory,
        field: GridField::new(q0.grid().clone(), q)?,
        snapshots,
        max_mass_drift,
        max_drift_rate,
        steps,
        max_dt,
    })
}

/// Divergence and sign checks, clamping and renormalization. Returns the
/// mass before renormalization.
fn finish_step(op: &Operator, q: &mut [f64], step: usize, time: f64) -> Result<f64> {
    // `!(v >= -tol)` also catches NaN; the slow scan only runs on failure.
    if q.iter().any(|v| !(*v >= -NEGATIVE_TOLERANCE) || *v == f64::INFINITY) {
        let (node, &value) = q
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -NEGATIVE_TOLERANCE) || **v == f64::INFINITY)
            .expect("a failing node exists");
        if !value.is_finite() {
            return Err(Error::Divergence { step, time });
        }
        return Err(Error::Monotonicity {
            step,
            time,
            node,
            value,
        });
    }
    // Negatives within tolerance and underflow-level values both go to zero.
    for v in q.iter_mut() {
        *v = if *v < FLUSH_BELOW { 0.0 } else { *v };
    }
    let mass = weighted_sum(op.weights(), q);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Divergence { step, time });
    }
    q.iter_mut().for_each(|v| *v /= mass);
    Ok(mass)
}

struct Rk4 {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    scratch: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn step(&mut self, op: &Operator, q: &mut [f64], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        op.rhs_into(q, &mut self.scratch, k1);
        for ((s, q), k) in self.stage.iter_mut().zip(q.iter()).zip(k1.iter()) {
            *s = q + 0.5 * dt * k;
        }
        op.rhs_into(&self.stage, &mut self.scratch, k2);
        for ((s, q), k) in self.stage.iter_mut().zip(q.iter()).zip(k2.iter()) {
            *s = q + 0.5 * dt * k;
        }
        op.rhs_into(&self.stage, &mut self.scratch, k3);
        for ((s, q), k) in self.stage.iter_mut().zip(q.iter()).zip(k3.iter()) {
            *s = q + dt * k;
        }
        op.rhs_into(&self.stage, &mut self.scratch, k4);
        let c = dt / 6.0;
        for i in 0..q.len() {
            q[i] += c * ((k1[i] + k4[i]) + 2.0 * (k2[i] + k3[i]));
        }
    }
}
