use bdmut::grid::Grid;
use bdmut::ibm::{self, IbmOptions, MutationKernel, Population};
use bdmut::landscape::RateTable;
use bdmut::{Error, PhenotypeLandscape};

/// Constant rates `b` and `d = r - s` on `[-1, 1]`.
fn flat(b: f64, d: f64) -> PhenotypeLandscape {
    let grid = Grid::uniform(1, -1.0, 1.0, 3).unwrap();
    let table = RateTable::new(grid, vec![b; 3], vec![1.0; 3]).unwrap();
    PhenotypeLandscape::custom(table, d + 1.0).unwrap()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn critical_branching_keeps_the_mean_size() {
    let land = flat(1.0, 1.0);
    let kernel = MutationKernel::gaussian(0.0, 1e-3).unwrap();
    let n0 = 20;
    let finals: Vec<f64> = ibm::run_replicates(10_000, 7, |seed| {
        let pop = Population::monomorphic(&[0.0], n0, n0 as f64, 0.0, seed)?;
        match ibm::simulate_overlapping(&land, &pop, &kernel, 1.0, &[1.0], &IbmOptions::default()) {
            Ok(run) => Ok(run.trajectory.size[0] * n0 as f64),
            Err(Error::Extinction { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .map(|r| r.unwrap())
    .collect();
    let (mean, se) = mean_and_se(&finals);
    // Var N_T = 2 b T N_0 for the critical process.
    assert!((se - (2.0 * n0 as f64 / finals.len() as f64).sqrt()).abs() < 0.2 * se);
    assert!((mean - n0 as f64).abs() <= 3.0 * se, "mean {mean} +- {se}");
}

#[test]
fn logistic_size_settles_at_fitness_over_competition() {
    let land = flat(1.5, 0.5);
    let kernel = MutationKernel::gaussian(0.5, 1e-3).unwrap();
    let (k, c) = (1000.0, 0.5);
    let times: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64).collect();
    let runs: Vec<_> = ibm::run_replicates(20, 100, |seed| {
        let pop = Population::monomorphic(&[0.0], 1000, k, c, seed)?;
        ibm::simulate_overlapping(&land, &pop, &kernel, 20.0, &times, &IbmOptions::default())
    })
    .into_iter()
    .map(|r| r.unwrap().trajectory)
    .collect();
    let e = ibm::ensemble_of(&runs, |t, i| t.size[i]).unwrap();
    let last = e.times.len() - 1;
    let equilibrium = 1.0 / c;
    assert!((e.mean[last] - equilibrium).abs() <= 3.0 * e.standard_error[last], "{} +- {}", e.mean[last], e.standard_error[last]);
    assert!(e.mean[0] == 1.0);
}

#[test]
fn seeds_determine_histories() {
    let land = PhenotypeLandscape::standard();
    let kernel = MutationKernel::gaussian(0.8, 6e-4).unwrap();
    let times = [0.0, 1.0, 2.0];
    let sim = |seed| {
        let pop = Population::monomorphic(&[0.0, -0.3], 300, 300.0, 0.25, seed)?;
        ibm::simulate_overlapping(&land, &pop, &kernel, 2.0, &times, &IbmOptions::default())
    };
    let a = sim(5).unwrap();
    let b = sim(5).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.events, b.events);
    assert_ne!(sim(6).unwrap().trajectory, a.trajectory);

    let single = ibm::run_replicates(1, 5, sim);
    assert_eq!(single.len(), 1);
    assert_eq!(single.into_iter().next().unwrap().unwrap().trajectory, a.trajectory);
}

#[test]
fn mutants_stay_in_the_domain() {
    let land = PhenotypeLandscape::standard();
    // Wide mutations started at a corner force frequent resampling.
    let kernel = MutationKernel::gaussian(1.0, 0.05).unwrap();
    let pop = Population::monomorphic(&[1.29, -1.29], 500, 500.0, 0.25, 3).unwrap();
    let run = ibm::simulate_overlapping(&land, &pop, &kernel, 2.0, &[2.0], &IbmOptions::default()).unwrap();
    assert!(run.population.iter().all(|x| land.domain.contains(x)));

    let regime = ibm::ScalingRegime::new(0.5, 500.0).unwrap();
    let kernel = MutationKernel::gaussian(1.0, 5.0).unwrap();
    let run = ibm::simulate_non_overlapping(&land, &pop, &kernel, &regime, 20, &[20], &IbmOptions::default()).unwrap();
    assert!(run.population.iter().all(|x| land.domain.contains(x)));
}

#[test]
fn failed_replicates_do_not_stop_the_others() {
    let results = ibm::run_replicates(4, 0, |seed| if seed == 2 { Err(Error::Extinction { time: 1.0 }) } else { Ok(seed) });
    assert!(results[2].is_err());
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 3);
    assert_eq!(*results[3].as_ref().unwrap(), 3);
}
