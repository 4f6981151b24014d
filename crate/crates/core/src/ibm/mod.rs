//! Individual-based birth-death models with mutation at birth.
//!
//! Two clocks are provided: an exact event-driven simulator with overlapping
//! generations, and a generation-by-generation model where all parents die
//! after reproducing.

mod generations;
mod overlapping;

pub use generations::simulate_non_overlapping;
pub use overlapping::simulate_overlapping;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{Domain, PhenotypeLandscape};
use crate::trajectory::Trajectory;

/// Model times at which replicate means of the overlapping model are
/// compared with the birth-weighted PDE.
pub const OVERLAPPING_CHECKPOINTS: [f64; 4] = [50.0, 100.0, 250.0, 500.0];

/// Model times at which the generation model is compared with the standard
/// PDE.
pub const NON_OVERLAPPING_CHECKPOINTS: [f64; 3] = [50.0, 100.0, 200.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    dim: usize,
    /// Flattened phenotypes, `dim` values per individual.
    phenotypes: Vec<f64>,
    /// Carrying-capacity scale `K`.
    pub k: f64,
    /// Competition intensity `c`; the per-capita competitive death rate is `c N / K`.
    pub c: f64,
    pub t: f64,
    pub seed: u64,
}

impl Population {
    pub fn new(dim: usize, phenotypes: Vec<f64>, k: f64, c: f64, seed: u64) -> Result<Self> {
        if dim == 0 || phenotypes.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} phenotype values do not split into vectors of length {dim}",
                phenotypes.len()
            )));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be nonnegative, got {c}")));
        }
        Ok(Self {
            dim,
            phenotypes,
            k,
            c,
            t: 0.0,
            seed,
        })
    }

    /// `count` identical individuals at `x0`.
    pub fn monomorphic(x0: &[f64], count: usize, k: f64, c: f64, seed: u64) -> Result<Self> {
        let phenotypes = x0.iter().copied().cycle().take(x0.len() * count).collect();
        Self::new(x0.len(), phenotypes, k, c, seed)
    }

    /// `count` individuals scattered around `x0` with per-trait standard
    /// deviation `blur`, each redrawn until it lies in `domain`.
    pub fn blurred(
        x0: &[f64],
        blur: f64,
        count: usize,
        domain: &Domain,
        k: f64,
        c: f64,
        seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        if !domain.contains(x0) {
            return Err(Error::OutsideDomain { point: x0.to_vec() });
        }
        // A separate stream so that blurring does not shift the event sequence.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut phenotypes = Vec::with_capacity(count * x0.len());
        let mut x = vec![0.0; x0.len()];
        for _ in 0..count {
            perturb_inside(&mut rng, x0, blur, domain, &mut x)?;
            phenotypes.extend_from_slice(&x);
        }
        Self::new(x0.len(), phenotypes, k, c, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.phenotypes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.phenotypes.is_empty()
    }

    pub fn phenotype(&self, i: usize) -> &[f64] {
        &self.phenotypes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.phenotypes.chunks_exact(self.dim)
    }

    pub fn mean_phenotype(&self) -> Vec<f64> {
        mean_of(&self.phenotypes, self.dim)
    }

    fn validate_against(&self, land: &PhenotypeLandscape) -> Result<()> {
        if self.dim != land.dim {
            return Err(Error::InvalidParameter(format!(
                "population has dimension {} but the landscape has {}",
                self.dim, land.dim
            )));
        }
        if self.is_empty() {
            return Err(Error::Extinction { time: self.t });
        }
        if let Some(x) = self.iter().find(|x| !land.domain.contains(x)) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    /// One row per individual, comma separated.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|k| format!("x_{k}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for x in self.iter() {
            let row: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn mean_of(flat: &[f64], dim: usize) -> Vec<f64> {
    let n = (flat.len() / dim).max(1) as f64;
    let mut acc = vec![0.0; dim];
    for x in flat.chunks_exact(dim) {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KernelShape {
    GaussianIsotropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MutationKernel {
    /// Probability that a birth carries a mutation.
    pub u: f64,
    /// Per-trait variance of a mutational step.
    pub lambda: f64,
    pub shape: KernelShape,
}

impl MutationKernel {
    pub fn gaussian(u: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidParameter(format!("U must lie in [0, 1], got {u}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            u,
            lambda,
            shape: KernelShape::GaussianIsotropic,
        })
    }

    /// Diffusion coefficient `λU/2` of the limiting equation.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.lambda * self.u
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRegime {
    pub eta: f64,
    pub epsilon_k: f64,
}

impl ScalingRegime {
    /// `ε_K = K^(-η)`.
    pub fn new(eta: f64, k: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
        }
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
        }
        Ok(Self {
            eta,
            epsilon_k: k.powf(-eta),
        })
    }
}

#[derive(Clone, Debug)]
pub struct IbmOptions {
    /// Population cap as a multiple of `K`.
    pub cap_factor: f64,
}

impl Default for IbmOptions {
    fn default() -> Self {
        Self { cap_factor: 50.0 }
    }
}

impl IbmOptions {
    fn cap(&self, k: f64) -> usize {
        (self.cap_factor * k).ceil() as usize
    }
}

#[derive(Clone, Debug)]
pub struct IbmRun {
    pub trajectory: Trajectory,
    pub population: Population,
    /// Number of events (overlapping model) or generations.
    pub events: u64,
}

/// Mutant phenotype: `parent + sd * N(0, 1)` per trait, redrawn until it
/// lies in the domain.
fn perturb_inside<R: Rng>(rng: &mut R, parent: &[f64], sd: f64, domain: &Domain, out: &mut [f64]) -> Result<()> {
    const MAX_TRIES: usize = 10_000;
    for _ in 0..MAX_TRIES {
        for (o, p) in out.iter_mut().zip(parent) {
            let z: f64 = rng.sample(StandardNormal);
            *o = p + sd * z;
        }
        if domain.contains(out) {
            return Ok(());
        }
    }
    Err(Error::Precondition(format!(
        "could not place a mutant of {parent:?} inside the domain after {MAX_TRIES} draws"
    )))
}

fn check_sample_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
    }
    if times.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
        return Err(Error::InvalidParameter(format!("sample times must lie in [0, {horizon}]")));
    }
    Ok(())
}

/// Runs `run(base_seed + i)` for `i < replicates`, concurrently when the
/// `parallel` feature is on. Results keep replicate order; one failure does
/// not stop the others.
pub fn run_replicates<T, F>(replicates: usize, base_seed: u64, run: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let seeds: Vec<u64> = (0..replicates as u64).map(|i| base_seed.wrapping_add(i)).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.into_iter().map(run).collect()
    }
}

/// Pointwise mean and standard error across trajectories sampled at the
/// same times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
}

pub fn ensemble_of(trajectories: &[Trajectory], observable: impl Fn(&Trajectory, usize) -> f64) -> Result<Ensemble> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    if trajectories.iter().any(|t| t.times != first.times) {
        return Err(Error::InvalidParameter("ensemble members sampled at different times".into()));
    }
    let r = trajectories.len() as f64;
    let mut mean = Vec::with_capacity(first.len());
    let mut se = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let vals: Vec<f64> = trajectories.iter().map(|t| observable(t, i)).collect();
        let m = vals.iter().sum::<f64>() / r;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        se.push((var / r).sqrt());
    }
    Ok(Ensemble {
        times: first.times.clone(),
        mean,
        standard_error: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_regime_is_exact_power() {
        let s = ScalingRegime::new(0.5, 1e4).unwrap();
        assert_eq!(s.epsilon_k, 1e4f64.powf(-0.5));
        assert!(ScalingRegime::new(1.0, 1e4).is_err());
    }

    #[test]
    fn kernel_validation_and_diffusion() {
        let k = MutationKernel::gaussian(0.8, 6e-4).unwrap();
        assert!((k.diffusion() - 2.4e-4).abs() < 1e-18);
        assert!(MutationKernel::gaussian(1.2, 6e-4).is_err());
        assert!(MutationKernel::gaussian(0.5, 0.0).is_err());
    }

    #[test]
    fn blurred_population_stays_inside() {
        let domain = Domain::cube(2, -1.3, 1.3);
        let pop = Population::blurred(&[1.25, 0.0], 0.2, 500, &domain, 100.0, 1.0, 3).unwrap();
        assert_eq!(pop.len(), 500);
        assert!(pop.iter().all(|x| domain.contains(x)));
    }

    #[test]
    fn ensemble_statistics() {
        let mut a = Trajectory::new();
        a.push(0.0, vec![1.0], 0.0, 1.0);
        let mut b = Trajectory::new();
        b.push(0.0, vec![3.0], 0.0, 1.0);
        let e = ensemble_of(&[a, b], |t, i| t.xbar[i][0]).unwrap();
        assert_eq!(e.mean, vec![2.0]);
        assert!((e.standard_error[0] - 1.0).abs() < 1e-15);
    }
}
