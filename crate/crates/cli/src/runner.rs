//! Dispatch of a resolved experiment to the numerical modules, and all
//! output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bdmut::analysis::{self, BiasReport, GammaThreshold, InitialDynamics};
use bdmut::grid::GridField;
use bdmut::ibm::{self, IbmOptions, IbmRun, MutationKernel, Population, ScalingRegime};
use bdmut::pde::{self, initial_condition, IntegrateOptions, Model};
use bdmut::spectral::{self, SpectralSolution};
use bdmut::{PhenotypeLandscape, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentSpec};
use crate::experiment::{Bifurcation, Experiment, RunKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: bdmut::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} sweep points failed")]
    PartialSweep { failed: usize, total: usize },
    #[error("all {total} sweep points failed")]
    SweepFailed { total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical { .. } | CliError::Io { .. } | CliError::SweepFailed { .. } => 2,
            CliError::PartialSweep { .. } => 3,
        }
    }
}

fn numerical(context: impl Into<String>) -> impl FnOnce(bdmut::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Numerical { context, source }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut out).and_then(|_| out.flush()).map_err(io)
}

/// Core writers report `bdmut::Error`; route their I/O failures here.
fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> bdmut::Result<()>) -> Result<(), CliError> {
    let mut inner = Ok(());
    write_file(path, |out| {
        inner = body(out);
        Ok(())
    })?;
    inner.map_err(|e| match e {
        bdmut::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Numerical {
            context: format!("writing {}", path.display()),
            source: other,
        },
    })
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

/// Scalars that a sweep aggregates, in column order.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub scalars: Vec<(String, f64)>,
    /// Trajectories of IBM replicates, kept for cross-point ensembles.
    pub trajectories: Vec<Trajectory>,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Runs one experiment into `dir`, manifest first.
pub fn run(exp: &Experiment, dir: &Path) -> Result<RunSummary, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let manifest = exp.spec.manifest();
    write_file(&dir.join("manifest.txt"), |out| out.write_all(manifest.as_bytes()))?;
    with_workers(exp.workers, || match (&exp.bifurcation, exp.kind) {
        (Some(bif), _) => run_bifurcation(exp, bif, dir),
        (None, RunKind::Qb | RunKind::QStand) => run_pde(exp, dir),
        (None, RunKind::Spectral) => run_spectral(exp, dir),
        (None, _) => run_ibm(exp, dir),
    })
}

fn model_of(exp: &Experiment) -> Result<Model, CliError> {
    let kind = if exp.kind == RunKind::QStand {
        pde::ModelKind::QStand
    } else {
        pde::ModelKind::QB
    };
    Model::new(kind, exp.diffusion).map_err(numerical("model"))
}

fn bias_json(bias: &BiasReport, dynamics: &InitialDynamics) -> Value {
    json!({
        "integral_value": bias.integral_value,
        "tolerance": bias.tolerance,
        "predicted_sign": bias.predicted_sign,
        "single_signed": bias.single_signed,
        "slope": dynamics.slope,
        "curvature": dynamics.curvature,
        "probe_dt": dynamics.dt,
    })
}

fn snapshot_name(t: f64) -> String {
    format!("field_t{t}.txt")
}

fn run_pde(exp: &Experiment, dir: &Path) -> Result<RunSummary, CliError> {
    let model = model_of(exp)?;
    let q0 = initial_condition(&exp.grid, &exp.x0, exp.width).map_err(numerical("initial condition"))?;
    let mut summary = serde_json::Map::new();
    summary.insert("preset".into(), json!(exp.spec.get("preset")));
    summary.insert("model".into(), json!(exp.spec.get("model.kind")));
    if exp.initial_bias {
        let bias = analysis::initial_bias(&exp.landscape, &q0, exp.diffusion).map_err(numerical("initial bias"))?;
        let dynamics = analysis::verify_initial_dynamics(&exp.landscape, &q0, exp.diffusion, None)
            .map_err(numerical("initial dynamics"))?;
        summary.insert("initial_bias".into(), bias_json(&bias, &dynamics));
    }
    let options = IntegrateOptions {
        stability_factor: exp.stability_factor,
        snapshot_times: exp.snapshot_times.clone(),
    };
    let run = pde::integrate(model, &exp.landscape, &q0, exp.horizon, &exp.sample_times, &options)
        .map_err(numerical("integration"))?;
    write_with(&dir.join("trajectory.csv"), |out| run.trajectory.write_csv(out, "mass", true))?;
    write_with(&dir.join("field_final.txt"), |out| run.field.write_snapshot(out, Some(exp.horizon)))?;
    for (t, field) in &run.snapshots {
        write_with(&dir.join(snapshot_name(*t)), |out| field.write_snapshot(out, Some(*t)))?;
    }

    let last = run.trajectory.len() - 1;
    let xbar = run.trajectory.xbar[last].clone();
    let mbar = run.trajectory.mbar[last];
    let target = spectral::inverse_birth_density(&exp.landscape, &exp.grid).map_err(numerical("1/b density"))?;
    let l1_inverse_birth = run.field.l1_distance(&target);
    summary.insert(
        "integration".into(),
        json!({
            "steps": run.steps,
            "dt": run.max_dt,
            "max_mass_drift": run.max_mass_drift,
            "max_drift_rate": run.max_drift_rate,
        }),
    );
    summary.insert(
        "final".into(),
        json!({ "t": exp.horizon, "xbar": xbar, "mbar": mbar, "l1_to_inverse_birth": l1_inverse_birth }),
    );
    write_json(&dir.join("summary.json"), &Value::Object(summary))?;

    let mut scalars: Vec<(String, f64)> = xbar
        .iter()
        .enumerate()
        .map(|(k, v)| (format!("final_xbar_{}", k + 1), *v))
        .collect();
    scalars.push(("final_mbar".into(), mbar));
    scalars.push(("l1_to_inverse_birth".into(), l1_inverse_birth));
    Ok(RunSummary {
        scalars,
        trajectories: vec![run.trajectory],
    })
}

#[derive(Serialize)]
struct StationaryReport<'a> {
    #[serde(flatten)]
    solution: &'a SpectralSolution,
    inverse_birth_bound: f64,
    l1_to_inverse_birth: f64,
    rhs_max_relative: f64,
    mode: Vec<f64>,
}

fn stationary_report(exp: &Experiment, land: &PhenotypeLandscape) -> Result<(SpectralSolution, Value), CliError> {
    let sol = spectral::solve_stationary(land, &exp.grid, exp.diffusion).map_err(numerical("stationary solve"))?;
    let target = spectral::inverse_birth_density(land, &exp.grid).map_err(numerical("1/b density"))?;
    let rhs = pde::rhs(Model::qb(exp.diffusion).map_err(numerical("model"))?, land, &sol.q_inf)
        .map_err(numerical("stationary residual"))?;
    let peak = sol
        .q_inf
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0;
    let report = StationaryReport {
        solution: &sol,
        inverse_birth_bound: spectral::inverse_birth_bound(land, &exp.grid).map_err(numerical("bound"))?,
        l1_to_inverse_birth: sol.q_inf.l1_distance(&target),
        rhs_max_relative: rhs.max_abs() / sol.q_inf.max_abs(),
        mode: exp.grid.point(peak),
    };
    let value = serde_json::to_value(&report).expect("plain data");
    Ok((sol, value))
}

fn run_spectral(exp: &Experiment, dir: &Path) -> Result<RunSummary, CliError> {
    let (sol, report) = stationary_report(exp, &exp.landscape)?;
    write_with(&dir.join("stationary.txt"), |out| sol.q_inf.write_snapshot(out, None))?;
    write_json(&dir.join("summary.json"), &json!({ "preset": exp.spec.get("preset"), "stationary": report }))?;
    let xbar = pde::mean_phenotype(&sol.q_inf);
    let mut scalars = vec![
        ("m_inf".to_string(), sol.m_inf),
        ("rayleigh".to_string(), sol.rayleigh),
        ("left_mass".to_string(), sol.left_mass),
        ("right_mass".to_string(), sol.right_mass),
        ("residual".to_string(), sol.residual),
    ];
    scalars.extend(xbar.iter().enumerate().map(|(k, v)| (format!("xbar_{}", k + 1), *v)));
    scalars.push((
        "l1_to_inverse_birth".into(),
        report["l1_to_inverse_birth"].as_f64().unwrap_or(f64::NAN),
    ));
    Ok(RunSummary {
        scalars,
        trajectories: Vec::new(),
    })
}

fn simulate_one(exp: &Experiment, seed: u64) -> bdmut::Result<IbmRun> {
    let s = &exp.ibm;
    let count = s.k.round() as usize;
    let pop = if s.blur > 0.0 {
        Population::blurred(&exp.x0, s.blur, count, &exp.landscape.domain, s.k, s.c, seed)?
    } else {
        Population::monomorphic(&exp.x0, count, s.k, s.c, seed)?
    };
    let kernel = MutationKernel::gaussian(exp.mutation_probability, exp.lambda)?;
    let options = IbmOptions {
        cap_factor: s.cap_factor,
    };
    match exp.kind {
        RunKind::IbmOverlap => {
            ibm::simulate_overlapping(&exp.landscape, &pop, &kernel, exp.horizon, &exp.sample_times, &options)
        }
        _ => {
            let regime = ScalingRegime::new(s.eta, s.k)?;
            let eps = regime.epsilon_k;
            let generations = (exp.horizon / eps).round() as usize;
            let mut samples: Vec<usize> = exp.sample_times.iter().map(|t| (t / eps).round() as usize).collect();
            samples.dedup();
            ibm::simulate_non_overlapping(&exp.landscape, &pop, &kernel, &regime, generations, &samples, &options)
        }
    }
}

fn write_ensemble(path: &Path, trajectories: &[Trajectory]) -> Result<(), CliError> {
    let dim = trajectories[0].dim();
    let mut columns = Vec::new();
    for k in 0..dim {
        let e = ibm::ensemble_of(trajectories, |t, i| t.xbar[i][k]).map_err(numerical("ensemble"))?;
        columns.push((format!("xbar_{}", k + 1), e));
    }
    columns.push((
        "mbar".into(),
        ibm::ensemble_of(trajectories, |t, i| t.mbar[i]).map_err(numerical("ensemble"))?,
    ));
    columns.push((
        "N_over_K".into(),
        ibm::ensemble_of(trajectories, |t, i| t.size[i]).map_err(numerical("ensemble"))?,
    ));
    write_file(path, |out| {
        write!(out, "t,replicates")?;
        for (name, _) in &columns {
            write!(out, ",{name}_mean,{name}_se")?;
        }
        writeln!(out)?;
        for (i, t) in columns[0].1.times.iter().enumerate() {
            write!(out, "{t},{}", trajectories.len())?;
            for (_, e) in &columns {
                write!(out, ",{:e},{:e}", e.mean[i], e.standard_error[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    })
}

fn run_ibm(exp: &Experiment, dir: &Path) -> Result<RunSummary, CliError> {
    let results = ibm::run_replicates(exp.replicates, exp.seed, |seed| simulate_one(exp, seed));
    let mut trajectories = Vec::new();
    let mut statuses = Vec::new();
    let mut first_error = None;
    for (i, result) in results.into_iter().enumerate() {
        let seed = exp.seed.wrapping_add(i as u64);
        match result {
            Ok(run) => {
                write_with(&dir.join(format!("replicate_{seed}.csv")), |out| {
                    run.trajectory.write_csv(out, "N_over_K", true)
                })?;
                if exp.ibm.dump_population {
                    write_with(&dir.join(format!("population_{seed}.csv")), |out| run.population.write_csv(out))?;
                }
                statuses.push(json!({ "seed": seed, "status": "ok", "events": run.events }));
                trajectories.push(run.trajectory);
            }
            Err(e) => {
                statuses.push(json!({ "seed": seed, "status": "failed", "error": e.to_string() }));
                first_error.get_or_insert((seed, e));
            }
        }
    }
    if !trajectories.is_empty() {
        write_ensemble(&dir.join("ensemble.csv"), &trajectories)?;
    }
    write_json(
        &dir.join("summary.json"),
        &json!({ "preset": exp.spec.get("preset"), "model": exp.spec.get("model.kind"), "replicates": statuses }),
    )?;
    if let Some((seed, source)) = first_error {
        return Err(CliError::Numerical {
            context: format!("replicate with seed {seed}"),
            source,
        });
    }
    let last = trajectories[0].len() - 1;
    let final_x1 = ibm::ensemble_of(&trajectories, |t, i| t.xbar[i][0]).map_err(numerical("ensemble"))?;
    let scalars = vec![
        ("final_xbar_1_mean".to_string(), final_x1.mean[last]),
        ("final_xbar_1_se".to_string(), final_x1.standard_error[last]),
        (
            "final_N_over_K_mean".to_string(),
            trajectories.iter().map(|t| t.size[last]).sum::<f64>() / trajectories.len() as f64,
        ),
    ];
    Ok(RunSummary { scalars, trajectories })
}

/// One γ column of the bifurcation diagram: `(t, x̄₁, left, right)` rows.
fn bifurcation_column(exp: &Experiment, bif: &Bifurcation, gamma: f64) -> Result<Vec<(Option<f64>, f64, f64, f64)>, CliError> {
    let land = PhenotypeLandscape::asymmetric(
        exp.landscape.dim,
        exp.landscape.beta,
        exp.landscape.sigma_sq.clone(),
        exp.landscape.b0,
        exp.landscape.r,
        gamma,
    )
    .and_then(|l| l.with_domain(exp.landscape.domain.clone()))
    .map_err(numerical(format!("landscape at gamma {gamma}")))?;
    let finite: Vec<f64> = bif.times.iter().flatten().copied().collect();
    let mut finite_rows = Vec::new();
    if let Some(&horizon) = finite.iter().max_by(|a, b| a.total_cmp(b)) {
        let q0 = initial_condition(&exp.grid, &exp.x0, exp.width).map_err(numerical("initial condition"))?;
        let mut sorted = finite.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let options = IntegrateOptions {
            stability_factor: exp.stability_factor,
            snapshot_times: sorted.clone(),
        };
        let run = pde::integrate(Model::qb(exp.diffusion).map_err(numerical("model"))?, &land, &q0, horizon, &sorted, &options)
            .map_err(numerical(format!("integration at gamma {gamma}")))?;
        for (t, field) in &run.snapshots {
            let (left, right) = spectral::half_masses(field.grid(), &field.grid().weights(), field.values());
            finite_rows.push((*t, pde::mean_phenotype(field)[0], left, right));
        }
    }
    let mut rows = Vec::new();
    for t in &bif.times {
        match t {
            Some(t) => {
                let &(_, x1, l, r) = finite_rows.iter().find(|row| row.0 == *t).expect("sampled");
                rows.push((Some(*t), x1, l, r));
            }
            None => {
                let sol = spectral::solve_stationary(&land, &exp.grid, exp.diffusion)
                    .map_err(numerical(format!("stationary solve at gamma {gamma}")))?;
                rows.push((None, pde::mean_phenotype(&sol.q_inf)[0], sol.left_mass, sol.right_mass));
            }
        }
    }
    Ok(rows)
}

fn run_bifurcation(exp: &Experiment, bif: &Bifurcation, dir: &Path) -> Result<RunSummary, CliError> {
    use rayon::prelude::*;
    let columns: Vec<Result<_, CliError>> = bif
        .gammas
        .par_iter()
        .map(|&g| bifurcation_column(exp, bif, g))
        .collect();
    let mut table = Vec::new();
    for (g, col) in bif.gammas.iter().zip(columns) {
        table.push((*g, col?));
    }
    write_file(&dir.join("bifurcation.csv"), |out| {
        writeln!(out, "gamma,t,xbar_1,left_mass,right_mass")?;
        for (k, t) in bif.times.iter().enumerate() {
            for (g, col) in &table {
                let t = t.map_or("inf".to_string(), |t| t.to_string());
                let (_, x1, l, r) = col[k];
                writeln!(out, "{g},{t},{x1:e},{l:e},{r:e}")?;
            }
        }
        Ok(())
    })?;

    let sigma = exp.landscape.sigma_sq[0].sqrt();
    let threshold: Option<GammaThreshold> =
        analysis::gamma_threshold(exp.landscape.dim, exp.diffusion, sigma, exp.landscape.b0).ok();
    let mut switches = serde_json::Map::new();
    let mut scalars = Vec::new();
    if let Some(th) = &threshold {
        scalars.push(("gamma_star".to_string(), th.gamma_star));
    }
    for (k, t) in bif.times.iter().enumerate() {
        let points: Vec<(f64, f64, f64)> = table.iter().map(|(g, col)| (*g, col[k].2, col[k].3)).collect();
        let label = t.map_or("inf".to_string(), |t| t.to_string());
        let switch = analysis::dominance_switch(&points);
        if let Some(s) = switch {
            scalars.push((format!("switch_t{label}"), s));
        }
        switches.insert(label, json!(switch));
    }
    write_json(
        &dir.join("summary.json"),
        &json!({
            "preset": exp.spec.get("preset"),
            "gamma_threshold": threshold,
            "dominance_switch": switches,
        }),
    )?;
    Ok(RunSummary {
        scalars,
        trajectories: Vec::new(),
    })
}

/// Outcome of one sweep point.
pub struct SweepPoint {
    pub value: String,
    pub directory: PathBuf,
    pub outcome: Result<RunSummary, CliError>,
}

/// One run per value of `key`, each in its own directory under the base
/// run directory, followed by an index and an aggregate table.
pub fn sweep(base: &ExperimentSpec, key: &str, values: &[String], root: &Path) -> Result<Vec<SweepPoint>, CliError> {
    // The key must exist before anything runs.
    if crate::config::schema(key).is_none() || key == "preset" {
        return Err(ConfigError::UnknownKey {
            origin: crate::config::Origin::Override,
            key: key.to_string(),
        }
        .into());
    }
    let base_exp = Experiment::from_spec(base.clone())?;
    let base_dir = root.join(&base_exp.output);
    fs::create_dir_all(&base_dir).map_err(|source| CliError::Io {
        path: base_dir.clone(),
        source,
    })?;
    let base_output = base.get("run.output").to_string();
    let prepared: Vec<(String, String, Result<Experiment, CliError>)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let rel = format!("{base_output}/point_{i:03}");
            let exp = base
                .with(key, v)
                .and_then(|s| s.with("run.output", &rel))
                .and_then(Experiment::from_spec)
                .map_err(CliError::from);
            (v.clone(), rel, exp)
        })
        .collect();
    let points: Vec<SweepPoint> = with_workers(base_exp.workers, || {
        use rayon::prelude::*;
        prepared
            .into_par_iter()
            .map(|(value, rel, exp)| {
                let directory = root.join(&rel);
                let outcome = exp.and_then(|e| run(&e, &directory));
                SweepPoint {
                    value,
                    directory: PathBuf::from(rel),
                    outcome,
                }
            })
            .collect()
    });

    write_file(&base_dir.join("sweep_index.csv"), |out| {
        writeln!(out, "point,{key},status,directory,message")?;
        for (i, p) in points.iter().enumerate() {
            let (status, message) = match &p.outcome {
                Ok(_) => ("ok", String::new()),
                Err(e) => ("failed", e.to_string().replace(['"', '\n'], "'")),
            };
            writeln!(out, "{i},{},{status},{},\"{message}\"", p.value, p.directory.display())?;
        }
        Ok(())
    })?;
    let header: Option<Vec<String>> = points
        .iter()
        .find_map(|p| p.outcome.as_ref().ok())
        .map(|s| s.scalars.iter().map(|(n, _)| n.clone()).collect());
    if let Some(header) = header {
        write_file(&base_dir.join("sweep.csv"), |out| {
            writeln!(out, "{key},{}", header.join(","))?;
            for p in &points {
                if let Ok(s) = &p.outcome {
                    write!(out, "{}", p.value)?;
                    for name in &header {
                        match s.scalars.iter().find(|(n, _)| n == name) {
                            Some((_, v)) => write!(out, ",{v:e}")?,
                            None => write!(out, ",")?,
                        }
                    }
                    writeln!(out)?;
                }
            }
            Ok(())
        })?;
    }
    if key == "run.seed" && base_exp.kind.is_ibm() {
        let all: Vec<Trajectory> = points
            .iter()
            .filter_map(|p| p.outcome.as_ref().ok())
            .flat_map(|s| s.trajectories.iter().cloned())
            .collect();
        if !all.is_empty() {
            write_ensemble(&base_dir.join("ensemble.csv"), &all)?;
        }
    }
    Ok(points)
}

/// Reads the stationary or final field written by a run.
pub fn read_field(path: &Path) -> Result<GridField, CliError> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GridField::read_snapshot(std::io::BufReader::new(file)).map_err(numerical(format!("reading {}", path.display())))
}
