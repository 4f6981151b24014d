use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{check_sample_times, perturb_inside, IbmOptions, IbmRun, MutationKernel, Population};
use crate::error::{Error, Result};
use crate::landscape::PhenotypeLandscape;
use crate::trajectory::Trajectory;

/// Running totals drift slowly under repeated add/subtract; resum this often.
const RESUM_EVERY: u64 = 1 << 20;

/// Living individuals with their cached intrinsic rates.
struct Cohort {
    dim: usize,
    x: Vec<f64>,
    birth: Vec<f64>,
    death: Vec<f64>,
    intrinsic_total: f64,
    /// Upper bound on `b + d` over every individual seen so far.
    bound: f64,
}

impl Cohort {
    fn new(land: &PhenotypeLandscape, pop: &Population) -> Result<Self> {
        let mut cohort = Self {
            dim: pop.dim(),
            x: Vec::with_capacity(pop.phenotypes.len() * 2),
            birth: Vec::with_capacity(pop.len() * 2),
            death: Vec::with_capacity(pop.len() * 2),
            intrinsic_total: 0.0,
            bound: 0.0,
        };
        for x in pop.iter() {
            cohort.push(land, x)?;
        }
        Ok(cohort)
    }

    fn len(&self) -> usize {
        self.birth.len()
    }

    fn push(&mut self, land: &PhenotypeLandscape, x: &[f64]) -> Result<()> {
        let b = land.birth_unchecked(x);
        let d = land.death_unchecked(x);
        if d < 0.0 {
            return Err(Error::Precondition(format!("negative death rate {d} at {x:?}")));
        }
        self.x.extend_from_slice(x);
        self.birth.push(b);
        self.death.push(d);
        self.intrinsic_total += b + d;
        self.bound = self.bound.max(b + d);
        Ok(())
    }

    fn remove(&mut self, i: usize) {
        self.intrinsic_total -= self.birth[i] + self.death[i];
        self.birth.swap_remove(i);
        self.death.swap_remove(i);
        let last = self.len();
        if i != last {
            let (head, tail) = self.x.split_at_mut(last * self.dim);
            head[i * self.dim..(i + 1) * self.dim].copy_from_slice(&tail[..self.dim]);
        }
        self.x.truncate(last * self.dim);
    }

    fn resum(&mut self) {
        self.intrinsic_total = self.birth.iter().zip(&self.death).map(|(b, d)| b + d).sum();
    }

    fn phenotype(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn mean_fitness(&self) -> f64 {
        let n = self.len().max(1) as f64;
        self.birth.iter().zip(&self.death).map(|(b, d)| b - d).sum::<f64>() / n
    }
}

/// Exact event-driven simulation. Each individual gives birth at rate `b(x)`
/// and dies at rate `d(x) + c N / K`; births carry a mutation with
/// probability `U`.
pub fn simulate_overlapping(
    land: &PhenotypeLandscape,
    pop0: &Population,
    kernel: &MutationKernel,
    horizon: f64,
    sample_times: &[f64],
    options: &IbmOptions,
) -> Result<IbmRun> {
    pop0.validate_against(land)?;
    if !(horizon >= pop0.t && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} precedes the start time {}", pop0.t)));
    }
    check_sample_times(sample_times, horizon)?;

    let mut rng = ChaCha8Rng::seed_from_u64(pop0.seed);
    let mut cohort = Cohort::new(land, pop0)?;
    let cap = options.cap(pop0.k);
    let competition = pop0.c / pop0.k;
    let sd = kernel.lambda.sqrt();
    let mut mutant = vec![0.0; cohort.dim];
    let mut trajectory = Trajectory::new();
    let mut samples = sample_times.iter().copied().filter(|&s| s >= pop0.t).peekable();
    let mut t = pop0.t;
    let mut events = 0u64;

    loop {
        let n = cohort.len();
        let competitive_total = competition * (n * n) as f64;
        let total = cohort.intrinsic_total + competitive_total;
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        let next = t + wait;
        while let Some(s) = samples.next_if(|&s| s <= next) {
            trajectory.push(
                s,
                super::mean_of(&cohort.x, cohort.dim),
                cohort.mean_fitness(),
                n as f64 / pop0.k,
            );
        }
        if next > horizon {
            t = horizon;
            break;
        }
        t = next;
        events += 1;

        let pick = rng.random::<f64>() * total;
        let dies = if pick < cohort.intrinsic_total {
            let i = loop {
                let i = rng.random_range(0..n);
                if rng.random::<f64>() * cohort.bound < cohort.birth[i] + cohort.death[i] {
                    break i;
                }
            };
            let (b, d) = (cohort.birth[i], cohort.death[i]);
            if rng.random::<f64>() * (b + d) < b {
                if rng.random::<f64>() < kernel.u {
                    let parent = cohort.phenotype(i).to_vec();
                    perturb_inside(&mut rng, &parent, sd, &land.domain, &mut mutant)?;
                } else {
                    mutant.copy_from_slice(cohort.phenotype(i));
                }
                cohort.push(land, &mutant)?;
                None
            } else {
                Some(i)
            }
        } else {
            Some(rng.random_range(0..n))
        };
        if let Some(i) = dies {
            cohort.remove(i);
            if cohort.len() == 0 {
                return Err(Error::Extinction { time: t });
            }
        } else if cohort.len() > cap {
            return Err(Error::RunawayPopulation {
                time: t,
                size: cohort.len(),
                cap,
            });
        }
        if events % RESUM_EVERY == 0 {
            cohort.resum();
        }
    }

    let mut population = Population::new(cohort.dim, cohort.x, pop0.k, pop0.c, pop0.seed)?;
    population.t = t;
    Ok(IbmRun {
        trajectory,
        population,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::landscape::RateTable;

    fn constant_rates(b: f64, d: f64) -> PhenotypeLandscape {
        let grid = Grid::uniform(1, -1.0, 1.0, 3).unwrap();
        let r = 2.0;
        let table = RateTable::new(grid.clone(), vec![b; 3], vec![r - d; 3]).unwrap();
        PhenotypeLandscape::custom(table, r).unwrap()
    }

    #[test]
    fn no_mutation_keeps_population_monomorphic() {
        let land = PhenotypeLandscape::standard();
        let pop = Population::monomorphic(&[0.0, -0.3], 200, 200.0, 1.0, 11).unwrap();
        let kernel = MutationKernel::gaussian(0.0, 6e-4).unwrap();
        let run = simulate_overlapping(&land, &pop, &kernel, 20.0, &[0.0, 10.0, 20.0], &IbmOptions::default()).unwrap();
        assert!(run.population.iter().all(|x| x == [0.0, -0.3]));
        for x in &run.trajectory.xbar {
            assert_eq!(x[0], 0.0);
            assert!((x[1] + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_history() {
        let land = PhenotypeLandscape::standard();
        let pop = Population::monomorphic(&[0.0, -0.3], 300, 300.0, 1.0, 5).unwrap();
        let kernel = MutationKernel::gaussian(0.8, 6e-4).unwrap();
        let a = simulate_overlapping(&land, &pop, &kernel, 5.0, &[0.0, 5.0], &IbmOptions::default()).unwrap();
        let b = simulate_overlapping(&land, &pop, &kernel, 5.0, &[0.0, 5.0], &IbmOptions::default()).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.population, b.population);
        assert!(a.population.iter().all(|x| land.domain.contains(x)));
    }

    #[test]
    fn extinction_reports_time() {
        let land = constant_rates(0.1, 5.0);
        let pop = Population::monomorphic(&[0.0], 5, 5.0, 0.0, 1).unwrap();
        let kernel = MutationKernel::gaussian(0.0, 1e-3).unwrap();
        match simulate_overlapping(&land, &pop, &kernel, 1e3, &[], &IbmOptions::default()) {
            Err(Error::Extinction { time }) => assert!(time > 0.0 && time < 1e3),
            other => panic!("expected extinction, got {other:?}"),
        }
    }

    #[test]
    fn runaway_growth_hits_the_cap() {
        let land = constant_rates(3.0, 0.0);
        let pop = Population::monomorphic(&[0.0], 10, 10.0, 0.0, 2).unwrap();
        let kernel = MutationKernel::gaussian(0.0, 1e-3).unwrap();
        let r = simulate_overlapping(&land, &pop, &kernel, 100.0, &[], &IbmOptions { cap_factor: 5.0 });
        assert!(matches!(r, Err(Error::RunawayPopulation { cap: 50, .. })));
    }
}
