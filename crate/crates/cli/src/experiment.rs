//! Typed view of a resolved [`ExperimentSpec`].

use std::path::PathBuf;

use bdmut::grid::{Axis, Grid};
use bdmut::landscape::{Domain, PhenotypeLandscape};
use bdmut::pde::initial_condition;

use crate::config::{expand_range, ConfigError, ExperimentSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Qb,
    QStand,
    IbmOverlap,
    IbmNonOverlap,
    Spectral,
}

impl RunKind {
    fn parse(s: &str) -> Self {
        match s {
            "QB" => Self::Qb,
            "QSTAND" => Self::QStand,
            "IBM_OVERLAP" => Self::IbmOverlap,
            "IBM_NONOVERLAP" => Self::IbmNonOverlap,
            _ => Self::Spectral,
        }
    }

    pub fn is_pde(self) -> bool {
        matches!(self, Self::Qb | Self::QStand)
    }

    pub fn is_ibm(self) -> bool {
        matches!(self, Self::IbmOverlap | Self::IbmNonOverlap)
    }
}

#[derive(Clone, Debug)]
pub struct IbmSettings {
    pub k: f64,
    pub c: f64,
    pub eta: f64,
    pub cap_factor: f64,
    pub blur: f64,
    pub dump_population: bool,
}

/// A bifurcation diagram over the birth-peak scaling.
#[derive(Clone, Debug)]
pub struct Bifurcation {
    pub gammas: Vec<f64>,
    /// `None` is the equilibrium.
    pub times: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub landscape: PhenotypeLandscape,
    pub kind: RunKind,
    pub diffusion: f64,
    pub lambda: f64,
    pub mutation_probability: f64,
    pub stability_factor: f64,
    pub grid: Grid,
    pub x0: Vec<f64>,
    pub width: f64,
    pub horizon: f64,
    pub sample_times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub workers: usize,
    pub output: PathBuf,
    pub ibm: IbmSettings,
    pub initial_bias: bool,
    pub bifurcation: Option<Bifurcation>,
}

fn bad(key: &str, spec: &ExperimentSpec, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        origin: Default::default(),
        key: key.to_string(),
        value: spec.get(key).to_string(),
        reason: reason.into(),
    }
}

fn positive(spec: &ExperimentSpec, key: &str) -> Result<f64, ConfigError> {
    let v = spec.float(key);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, spec, "must be positive"))
    }
}

/// `0, every, 2 every, ...` below `horizon`, then `horizon` itself.
pub fn cadence(horizon: f64, every: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * every;
        if t >= horizon - 1e-9 * every {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(horizon);
    times
}

fn build_landscape(spec: &ExperimentSpec) -> Result<PhenotypeLandscape, ConfigError> {
    let dim = spec.int("landscape.dim") as usize;
    if dim == 0 || dim > 2 {
        return Err(bad("landscape.dim", spec, "only 1 and 2 dimensions are supported"));
    }
    let mut sigma_sq = spec.floats("landscape.sigma_sq");
    if sigma_sq.len() == 1 {
        sigma_sq = vec![sigma_sq[0]; dim];
    }
    let family = spec.get("landscape.family");
    let one_dimensional = matches!(family, "PiecewiseConstant1D" | "Tanh1D");
    if one_dimensional && dim != 1 {
        return Err(bad("landscape.dim", spec, format!("{family} is one-dimensional")));
    }
    if !one_dimensional && sigma_sq.len() != dim {
        return Err(bad("landscape.sigma_sq", spec, format!("need 1 or {dim} widths")));
    }
    let (beta, b0, r) = (spec.float("landscape.beta"), spec.float("landscape.b0"), spec.float("landscape.r"));
    let built = match family {
        "GaussianTwoPeak" => PhenotypeLandscape::gaussian_two_peak(dim, beta, sigma_sq, b0, r),
        "GaussianTwoPeakAsymmetric" => {
            PhenotypeLandscape::asymmetric(dim, beta, sigma_sq, b0, r, spec.float("landscape.gamma"))
        }
        "PiecewiseConstant1D" => {
            PhenotypeLandscape::piecewise_constant(spec.float("landscape.a"), spec.float("landscape.M"), r)
        }
        _ => PhenotypeLandscape::tanh(spec.float("landscape.alpha"), spec.float("landscape.a"), r),
    };
    let land = built.map_err(|e| ConfigError::Inconsistent(format!("landscape: {e}")))?;
    let domain = match (spec.float_or_auto("grid.lo"), spec.float_or_auto("grid.hi")) {
        (None, None) => return Ok(land),
        (lo, hi) => {
            let (dlo, dhi) = land.domain.bounds[0];
            Domain::cube(dim, lo.unwrap_or(dlo), hi.unwrap_or(dhi))
        }
    };
    land.with_domain(domain)
        .map_err(|e| ConfigError::Inconsistent(format!("landscape on the grid box: {e}")))
}

fn build_grid(spec: &ExperimentSpec, land: &PhenotypeLandscape) -> Result<Grid, ConfigError> {
    let mut nodes = spec.floats("grid.nodes");
    if nodes.len() == 1 {
        nodes = vec![nodes[0]; land.dim];
    }
    if nodes.len() != land.dim || nodes.iter().any(|n| n.fract() != 0.0 || *n < 3.0) {
        return Err(bad("grid.nodes", spec, format!("need 1 or {} integers >= 3", land.dim)));
    }
    let axes: Result<Vec<Axis>, _> = land
        .domain
        .bounds
        .iter()
        .zip(&nodes)
        .map(|(&(lo, hi), &n)| Axis::new(lo, hi, n as usize))
        .collect();
    axes.and_then(Grid::new).map_err(|e| bad("grid.nodes", spec, e.to_string()))
}

impl Experiment {
    pub fn from_spec(spec: ExperimentSpec) -> Result<Self, ConfigError> {
        let landscape = build_landscape(&spec)?;
        let grid = build_grid(&spec, &landscape)?;
        let kind = RunKind::parse(spec.get("model.kind"));

        let x0 = spec.floats("init.x0");
        if x0.len() != landscape.dim {
            return Err(bad("init.x0", &spec, format!("need {} coordinates", landscape.dim)));
        }
        if !landscape.domain.contains(&x0) {
            return Err(bad("init.x0", &spec, "outside the domain"));
        }
        let width = spec.float_or_auto("init.width").unwrap_or(2.0 * grid.min_spacing());
        if kind.is_pde() || spec.flag("analysis.initial_bias") {
            initial_condition(&grid, &x0, width).map_err(|e| bad("init.width", &spec, e.to_string()))?;
        }

        let horizon = spec.float("run.T");
        if horizon < 0.0 {
            return Err(bad("run.T", &spec, "must be nonnegative"));
        }
        let every = positive(&spec, "run.sample_every")?;
        let snapshot_times = spec.floats("run.snapshot_times");
        if snapshot_times.iter().any(|&t| t < 0.0 || t > horizon) || snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("run.snapshot_times", &spec, "need increasing times within [0, T]"));
        }
        let replicates = spec.int("run.replicates") as usize;
        if replicates == 0 {
            return Err(bad("run.replicates", &spec, "need at least one"));
        }
        let workers = (spec.int("run.workers") as usize).max(1);

        let mutation_probability = spec.float("model.U");
        if !(0.0..=1.0).contains(&mutation_probability) {
            return Err(bad("model.U", &spec, "must lie in [0, 1]"));
        }
        let stability_factor = spec.float("model.stability_factor");
        if !(stability_factor > 0.0 && stability_factor <= 1.0) {
            return Err(bad("model.stability_factor", &spec, "must lie in (0, 1]"));
        }
        let eta = spec.float("ibm.eta");
        if !(eta > 0.0 && eta < 1.0) {
            return Err(bad("ibm.eta", &spec, "must lie in (0, 1)"));
        }
        let ibm = IbmSettings {
            k: positive(&spec, "ibm.K")?,
            c: spec.float("ibm.c"),
            eta,
            cap_factor: positive(&spec, "ibm.cap_factor")?,
            blur: spec.float("ibm.blur"),
            dump_population: spec.flag("ibm.dump_population"),
        };
        if ibm.c < 0.0 {
            return Err(bad("ibm.c", &spec, "must be nonnegative"));
        }

        let gammas = expand_range(spec.get("sweep.gamma_grid"));
        let bifurcation = if gammas.is_empty() {
            None
        } else {
            if landscape.family != bdmut::Family::GaussianTwoPeakAsymmetric {
                return Err(ConfigError::Inconsistent(
                    "sweep.gamma_grid needs landscape.family = GaussianTwoPeakAsymmetric".into(),
                ));
            }
            if kind != RunKind::Qb {
                return Err(ConfigError::Inconsistent("sweep.gamma_grid needs model.kind = QB".into()));
            }
            let times = spec.times("sweep.times");
            if times.is_empty() {
                return Err(bad("sweep.times", &spec, "the bifurcation diagram needs at least one time"));
            }
            if gammas[0] < 1.0 {
                return Err(bad("sweep.gamma_grid", &spec, "gamma must be at least 1"));
            }
            Some(Bifurcation { gammas, times })
        };

        Ok(Self {
            diffusion: positive(&spec, "model.D")?,
            lambda: positive(&spec, "model.lambda")?,
            mutation_probability,
            stability_factor,
            landscape,
            kind,
            grid,
            x0,
            width,
            horizon,
            sample_times: cadence(horizon, every),
            snapshot_times,
            seed: spec.int("run.seed"),
            replicates,
            workers,
            output: PathBuf::from(spec.get("run.output")),
            ibm,
            initial_bias: spec.flag("analysis.initial_bias"),
            bifurcation,
            spec,
        })
    }
}
