use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{perturb_inside, IbmOptions, IbmRun, MutationKernel, Population, ScalingRegime};
use crate::error::{Error, Result};
use crate::landscape::PhenotypeLandscape;
use crate::trajectory::Trajectory;

/// Discrete generations under weak selection. Each parent at `x` leaves a
/// Poisson number of offspring with mean `exp(ε m(x))`, each offspring
/// survives competition with probability `exp(-ε c N / K)`, survivors mutate
/// with probability `U` using per-trait variance `ε λ`, and all parents die.
/// Model time advances by `ε` per generation.
///
/// Survival thinning is folded into the Poisson mean, which leaves the
/// distribution of survivors unchanged.
pub fn simulate_non_overlapping(
    land: &PhenotypeLandscape,
    pop0: &Population,
    kernel: &MutationKernel,
    regime: &ScalingRegime,
    generations: usize,
    sample_generations: &[usize],
    options: &IbmOptions,
) -> Result<IbmRun> {
    pop0.validate_against(land)?;
    if sample_generations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("sample generations must be strictly increasing".into()));
    }
    if sample_generations.last().is_some_and(|&g| g > generations) {
        return Err(Error::InvalidParameter(format!(
            "sample generations must not exceed {generations}"
        )));
    }

    let eps = regime.epsilon_k;
    let competition = eps * pop0.c / pop0.k;
    let sd = (eps * kernel.lambda).sqrt();
    let cap = options.cap(pop0.k);
    let dim = pop0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(pop0.seed);

    let mut parents = pop0.phenotypes.clone();
    let mut fitness: Vec<f64> = pop0.iter().map(|x| land.fitness_unchecked(x)).collect();
    let mut offspring = Vec::with_capacity(parents.len());
    let mut offspring_fitness = Vec::with_capacity(fitness.len());
    let mut mutant = vec![0.0; dim];
    let mut trajectory = Trajectory::new();
    let mut samples = sample_generations.iter().copied().peekable();

    let record = |g: usize, x: &[f64], m: &[f64], trajectory: &mut Trajectory| {
        let n = m.len().max(1) as f64;
        trajectory.push(
            pop0.t + g as f64 * eps,
            super::mean_of(x, dim),
            m.iter().sum::<f64>() / n,
            m.len() as f64 / pop0.k,
        );
    };

    for g in 0..generations {
        if samples.next_if_eq(&g).is_some() {
            record(g, &parents, &fitness, &mut trajectory);
        }
        let n = fitness.len();
        let survival = (-competition * n as f64).exp();
        offspring.clear();
        offspring_fitness.clear();
        for (i, &m) in fitness.iter().enumerate() {
            let mean = (eps * m).exp() * survival;
            let count = Poisson::new(mean)
                .map_err(|e| Error::InvalidParameter(format!("offspring mean {mean}: {e}")))?
                .sample(&mut rng) as usize;
            let parent = &parents[i * dim..(i + 1) * dim];
            for _ in 0..count {
                if rng.random::<f64>() < kernel.u {
                    perturb_inside(&mut rng, parent, sd, &land.domain, &mut mutant)?;
                    offspring.extend_from_slice(&mutant);
                    offspring_fitness.push(land.fitness_unchecked(&mutant));
                } else {
                    offspring.extend_from_slice(parent);
                    offspring_fitness.push(m);
                }
            }
        }
        std::mem::swap(&mut parents, &mut offspring);
        std::mem::swap(&mut fitness, &mut offspring_fitness);
        let time = pop0.t + (g + 1) as f64 * eps;
        if fitness.is_empty() {
            return Err(Error::Extinction { time });
        }
        if fitness.len() > cap {
            return Err(Error::RunawayPopulation {
                time,
                size: fitness.len(),
                cap,
            });
        }
    }
    if samples.next_if_eq(&generations).is_some() {
        record(generations, &parents, &fitness, &mut trajectory);
    }

    let mut population = Population::new(dim, parents, pop0.k, pop0.c, pop0.seed)?;
    population.t = pop0.t + generations as f64 * eps;
    Ok(IbmRun {
        trajectory,
        population,
        events: generations as u64,
    })
}
