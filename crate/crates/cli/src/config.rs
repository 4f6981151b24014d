//! Flat `section.key = value` experiment files.
//!
//! Every key has a schema entry with a default. A preset replaces some of
//! those defaults, a config file replaces some more, and `--set` overrides
//! come last. Values are canonicalized on entry, so a manifest written from
//! the resolved spec reads back to the same spec byte for byte.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{origin}unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}key `{key}`: invalid value `{value}` ({reason})")]
    InvalidValue {
        origin: Origin,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown preset `{0}` (see `bdmut presets`)")]
    UnknownPreset(String),
    #[error("{0}")]
    Inconsistent(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where a value came from, for diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Origin {
    #[default]
    Default,
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => Ok(()),
            Origin::Line(n) => write!(f, "line {n}: "),
            Origin::Override => write!(f, "--set: "),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Float,
    /// `auto` or a float.
    FloatOrAuto,
    Int,
    Bool,
    /// Comma-separated floats; may be empty.
    Floats,
    /// Comma-separated floats or `inf`; may be empty.
    Times,
    /// `start:stop:step`, or empty.
    Range,
    Choice(&'static [&'static str]),
    Text,
}

pub const PRESETS: &[&str] = &["fig2a", "fig2b", "fig3a", "fig3b", "figA1", "figB2", "custom"];
pub const FAMILIES: &[&str] = &[
    "GaussianTwoPeak",
    "GaussianTwoPeakAsymmetric",
    "PiecewiseConstant1D",
    "Tanh1D",
];
pub const MODELS: &[&str] = &["QB", "QSTAND", "IBM_OVERLAP", "IBM_NONOVERLAP", "SPECTRAL"];

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(key: &'static str, kind: Kind, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, kind, default, help }
}

pub const SCHEMA: &[KeySpec] = &[
    key("preset", Kind::Choice(PRESETS), "custom", "named starting point"),
    key("landscape.family", Kind::Choice(FAMILIES), "GaussianTwoPeak", "landscape family"),
    key("landscape.dim", Kind::Int, "2", "phenotype dimension"),
    key("landscape.beta", Kind::Float, "0.5", "optimum offset along x1"),
    key("landscape.sigma_sq", Kind::Floats, "0.1,0.1", "per-trait Gaussian widths"),
    key("landscape.b0", Kind::Float, "0.7", "baseline birth and survival"),
    key("landscape.r", Kind::Float, "1.7", "death-rate offset"),
    key("landscape.gamma", Kind::Float, "1", "birth-peak scaling"),
    key("landscape.alpha", Kind::Float, "40", "tanh steepness"),
    key("landscape.a", Kind::Float, "1", "support half-width of the 1D families"),
    key("landscape.M", Kind::Float, "10", "exterior penalty of the piecewise family"),
    key("model.kind", Kind::Choice(MODELS), "QB", "what to run"),
    key("model.D", Kind::Float, "0.00024", "mutational diffusion of the PDE models"),
    key("model.lambda", Kind::Float, "0.0006", "per-trait mutational variance of the IBMs"),
    key("model.U", Kind::Float, "0.8", "mutation probability per birth"),
    key("model.stability_factor", Kind::Float, "0.4", "fraction of the explicit step bound"),
    key("grid.nodes", Kind::Floats, "131", "nodes per axis, one value or one per axis"),
    key("grid.lo", Kind::FloatOrAuto, "auto", "lower domain bound on every axis"),
    key("grid.hi", Kind::FloatOrAuto, "auto", "upper domain bound on every axis"),
    key("init.x0", Kind::Floats, "0,-0.3", "initial phenotype"),
    key("init.width", Kind::FloatOrAuto, "auto", "initial Gaussian width, auto = 2h"),
    key("run.T", Kind::Float, "500", "horizon in model time"),
    key("run.sample_every", Kind::Float, "5", "sampling cadence"),
    key("run.snapshot_times", Kind::Floats, "", "extra field snapshots"),
    key("run.seed", Kind::Int, "1", "base seed of the IBMs"),
    key("run.replicates", Kind::Int, "1", "IBM replicates, seeds base..base+R-1"),
    key("run.workers", Kind::Int, "1", "concurrent replicates or sweep points"),
    key("run.output", Kind::Text, "custom", "run directory under the output root"),
    key("ibm.K", Kind::Float, "10000", "carrying-capacity scale"),
    key("ibm.c", Kind::Float, "0.25", "competition intensity"),
    key("ibm.eta", Kind::Float, "0.5", "weak-selection exponent of the discrete model"),
    key("ibm.cap_factor", Kind::Float, "50", "population cap as a multiple of K"),
    key("ibm.blur", Kind::Float, "0", "initial phenotype spread, 0 = monomorphic"),
    key("ibm.dump_population", Kind::Bool, "false", "write the final phenotypes"),
    key("analysis.initial_bias", Kind::Bool, "false", "report the initial bias of x1"),
    key("sweep.gamma_grid", Kind::Range, "", "gamma values for the bifurcation diagram"),
    key("sweep.times", Kind::Times, "", "times of the bifurcation diagram, inf allowed"),
];

/// Published values layered over the schema defaults.
pub fn preset_values(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    const FIG2A: &[(&str, &str)] = &[
        ("model.kind", "QB"),
        ("run.T", "500"),
        ("run.sample_every", "5"),
        ("run.output", "fig2a"),
    ];
    const FIG2B: &[(&str, &str)] = &[
        ("model.kind", "QSTAND"),
        ("run.T", "200"),
        ("run.sample_every", "2"),
        ("run.output", "fig2b"),
    ];
    const FIG3A: &[(&str, &str)] = &[
        ("model.kind", "QB"),
        ("init.x0", "0,-0.1"),
        ("run.T", "100"),
        ("run.sample_every", "1"),
        ("analysis.initial_bias", "true"),
        ("run.output", "fig3a"),
    ];
    const FIG3B: &[(&str, &str)] = &[
        ("model.kind", "QB"),
        ("landscape.sigma_sq", "0.05555555555555555,0.1"),
        ("init.x0", "0,-0.1"),
        ("run.T", "100"),
        ("run.sample_every", "1"),
        ("analysis.initial_bias", "true"),
        ("run.output", "fig3b"),
    ];
    const FIGA1: &[(&str, &str)] = &[
        ("landscape.family", "Tanh1D"),
        ("landscape.dim", "1"),
        ("landscape.sigma_sq", "0.1"),
        ("landscape.r", "2"),
        ("landscape.alpha", "40"),
        ("landscape.a", "1"),
        ("model.kind", "QB"),
        ("model.D", "0.01"),
        ("model.stability_factor", "1"),
        ("grid.nodes", "1001"),
        ("init.x0", "0"),
        ("run.T", "200"),
        ("run.sample_every", "2"),
        ("run.snapshot_times", "40"),
        ("run.output", "figA1"),
    ];
    const FIGB2: &[(&str, &str)] = &[
        ("landscape.family", "GaussianTwoPeakAsymmetric"),
        ("model.kind", "QB"),
        ("model.D", "0.00025"),
        ("run.T", "500"),
        ("sweep.gamma_grid", "1:1.1:0.005"),
        ("sweep.times", "40,500,inf"),
        ("run.output", "figB2"),
    ];
    match name {
        "fig2a" => Some(FIG2A),
        "fig2b" => Some(FIG2B),
        "fig3a" => Some(FIG3A),
        "fig3b" => Some(FIG3B),
        "figA1" => Some(FIGA1),
        "figB2" => Some(FIGB2),
        "custom" => Some(&[]),
        _ => None,
    }
}

pub fn preset_description(name: &str) -> &'static str {
    match name {
        "fig2a" => "birth-weighted model, two-peak landscape: hook trajectory and fitness plateau",
        "fig2b" => "standard model, same landscape: x1 stays on the symmetry axis",
        "fig3a" => "birth-weighted model from (0,-0.1), widths (1/10,1/10), with the initial bias",
        "fig3b" => "birth-weighted model from (0,-0.1), widths (1/18,1/10), with the initial bias",
        "figA1" => "flat fitness on the tanh landscape: convergence to 1/b",
        "figB2" => "x1 against the birth-peak scaling gamma at finite times and at equilibrium",
        _ => "schema defaults only",
    }
}

pub fn schema(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

fn parse_float(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| "not a number".to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("not finite".into())
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Canonical text for `raw` under `kind`.
pub fn canonicalize(kind: Kind, raw: &str) -> Result<String, String> {
    let raw = raw.trim();
    match kind {
        Kind::Float => parse_float(raw).map(|v| v.to_string()),
        Kind::FloatOrAuto if raw.eq_ignore_ascii_case("auto") => Ok("auto".into()),
        Kind::FloatOrAuto => parse_float(raw).map(|v| v.to_string()),
        Kind::Int => raw
            .parse::<u64>()
            .map(|v| v.to_string())
            .map_err(|_| "not a nonnegative integer".into()),
        Kind::Bool => match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok("true".into()),
            "false" | "no" | "0" => Ok("false".into()),
            _ => Err("expected true or false".into()),
        },
        Kind::Floats => {
            let v: Result<Vec<f64>, String> = split_list(raw).map(parse_float).collect();
            v.map(|v| join(&v))
        }
        Kind::Times => {
            let v: Result<Vec<String>, String> = split_list(raw)
                .map(|s| {
                    if s.eq_ignore_ascii_case("inf") {
                        Ok("inf".to_string())
                    } else {
                        parse_float(s).map(|v| v.to_string())
                    }
                })
                .collect();
            v.map(|v| v.join(","))
        }
        Kind::Range if raw.is_empty() => Ok(String::new()),
        Kind::Range => {
            let parts: Result<Vec<f64>, String> = raw.split(':').map(parse_float).collect();
            match parts?.as_slice() {
                &[a, b, step] if step > 0.0 && b >= a => Ok(format!("{a}:{b}:{step}")),
                &[_, _, _] => Err("need start <= stop and a positive step".into()),
                _ => Err("expected start:stop:step".into()),
            }
        }
        Kind::Choice(options) => options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(raw))
            .map(|o| o.to_string())
            .ok_or_else(|| format!("expected one of {}", options.join(", "))),
        Kind::Text if raw.is_empty() => Err("must not be empty".into()),
        Kind::Text => Ok(raw.to_string()),
    }
}

/// Expands `start:stop:step` into its points, stop included when it lands
/// on the lattice.
pub fn expand_range(canonical: &str) -> Vec<f64> {
    if canonical.is_empty() {
        return Vec::new();
    }
    let p: Vec<f64> = canonical.split(':').map(|s| s.parse().expect("canonical")).collect();
    let (a, b, step) = (p[0], p[1], p[2]);
    let count = ((b - a) / step + 1e-9).floor() as usize;
    // Rounding to nine decimals keeps 1 + 7*0.005 printing as 1.035.
    (0..=count)
        .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// A fully resolved set of key/value pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentSpec {
    values: BTreeMap<&'static str, String>,
}

/// Parsed `key = value` lines with their line numbers.
pub type Assignments = Vec<(usize, String, String)>;

pub fn parse_text(text: &str) -> Result<Assignments, ConfigError> {
    let mut out: Assignments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                text: line.trim().to_string(),
            });
        };
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                text: line.trim().to_string(),
            });
        }
        if out.iter().any(|(_, existing, _)| *existing == k) {
            return Err(ConfigError::Duplicate { line: line_no, key: k });
        }
        out.push((line_no, k, v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: arg.to_string(),
        })
}

impl ExperimentSpec {
    /// Schema defaults, then the preset, then file assignments, then
    /// overrides. A preset named on the command line wins over one named in
    /// the file.
    pub fn resolve(
        preset: Option<&str>,
        file: &Assignments,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let file_preset = file.iter().find(|(_, k, _)| k == "preset");
        let preset_name = match (preset, file_preset) {
            (Some(p), _) => canonicalize(schema("preset").unwrap().kind, p)
                .map_err(|_| ConfigError::UnknownPreset(p.to_string()))?,
            (None, Some((line, _, v))) => canonicalize(schema("preset").unwrap().kind, v).map_err(|reason| {
                ConfigError::InvalidValue {
                    origin: Origin::Line(*line),
                    key: "preset".into(),
                    value: v.clone(),
                    reason,
                }
            })?,
            (None, None) => "custom".to_string(),
        };
        let layer = preset_values(&preset_name).ok_or_else(|| ConfigError::UnknownPreset(preset_name.clone()))?;

        let mut values: BTreeMap<&'static str, String> =
            SCHEMA.iter().map(|s| (s.key, s.default.to_string())).collect();
        values.insert("preset", preset_name.clone());
        for (k, v) in layer {
            values.insert(schema(k).expect("preset keys are in the schema").key, v.to_string());
        }

        let mut assign = |origin: Origin, k: &str, v: &str| -> Result<(), ConfigError> {
            if k == "preset" {
                return Ok(());
            }
            let spec = schema(k).ok_or_else(|| ConfigError::UnknownKey {
                origin: origin.clone(),
                key: k.to_string(),
            })?;
            let canonical = canonicalize(spec.kind, v).map_err(|reason| ConfigError::InvalidValue {
                origin,
                key: k.to_string(),
                value: v.to_string(),
                reason,
            })?;
            values.insert(spec.key, canonical);
            Ok(())
        };
        for (line, k, v) in file {
            assign(Origin::Line(*line), k, v)?;
        }
        for (k, v) in overrides {
            assign(Origin::Override, k, v)?;
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    /// Replaces one value, canonicalizing it; used by sweeps.
    pub fn with(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let spec = schema(key).ok_or_else(|| ConfigError::UnknownKey {
            origin: Origin::Override,
            key: key.to_string(),
        })?;
        let canonical = canonicalize(spec.kind, value).map_err(|reason| ConfigError::InvalidValue {
            origin: Origin::Override,
            key: key.to_string(),
            value: value.to_string(),
            reason,
        })?;
        let mut next = self.clone();
        next.values.insert(spec.key, canonical);
        Ok(next)
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("canonical float")
    }

    pub fn float_or_auto(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            "auto" => None,
            v => Some(v.parse().expect("canonical float")),
        }
    }

    pub fn int(&self, key: &str) -> u64 {
        self.get(key).parse().expect("canonical integer")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        split_list(self.get(key)).map(|s| s.parse().expect("canonical float")).collect()
    }

    /// `None` stands for `inf`.
    pub fn times(&self, key: &str) -> Vec<Option<f64>> {
        split_list(self.get(key))
            .map(|s| if s == "inf" { None } else { Some(s.parse().expect("canonical float")) })
            .collect()
    }

    /// The manifest text: one `key = value` line per schema key, sorted.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let spec = ExperimentSpec::resolve(Some("fig2a"), &vec![], &[("model.D".into(), "2.4e-4".into())]).unwrap();
        let text = spec.manifest();
        let again = ExperimentSpec::resolve(None, &parse_text(&text).unwrap(), &[]).unwrap();
        assert_eq!(spec, again);
        assert_eq!(text, again.manifest());
        assert!(text.contains("model.D = 0.00024\n"));
    }

    #[test]
    fn every_preset_key_is_known() {
        for p in PRESETS {
            for (k, v) in preset_values(p).unwrap() {
                let s = schema(k).unwrap_or_else(|| panic!("{p}: {k}"));
                assert_eq!(canonicalize(s.kind, v).as_deref(), Ok(*v), "{p}: {k} is not canonical");
            }
        }
        for s in SCHEMA {
            assert_eq!(canonicalize(s.kind, s.default).as_deref(), Ok(s.default), "{}", s.key);
        }
    }

    #[test]
    fn diagnostics_carry_line_and_key() {
        let file = parse_text("# comment\nmodel.D = 1e-3\n\nrun.T = soon\n").unwrap();
        let err = ExperimentSpec::resolve(None, &file, &[]).unwrap_err();
        assert_eq!(err.to_string(), "line 4: key `run.T`: invalid value `soon` (not a number)");
        let file = parse_text("grid.size = 3").unwrap();
        assert!(matches!(
            ExperimentSpec::resolve(None, &file, &[]),
            Err(ConfigError::UnknownKey { origin: Origin::Line(1), .. })
        ));
        assert!(matches!(parse_text("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_text("a = 1\na = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn precedence_is_preset_file_override() {
        let file = parse_text("preset = fig2b\nrun.T = 10").unwrap();
        let spec = ExperimentSpec::resolve(None, &file, &[("run.T".into(), "20".into())]).unwrap();
        assert_eq!(spec.get("model.kind"), "QSTAND");
        assert_eq!(spec.get("run.T"), "20");
        let spec = ExperimentSpec::resolve(Some("fig2a"), &file, &[]).unwrap();
        assert_eq!(spec.get("model.kind"), "QB");
        assert_eq!(spec.get("run.T"), "10");
    }

    #[test]
    fn ranges_include_their_end() {
        let g = expand_range(&canonicalize(Kind::Range, "1.0:1.1:0.005").unwrap());
        assert_eq!(g.len(), 21);
        assert_eq!(g[7], 1.035);
        assert_eq!(*g.last().unwrap(), 1.1);
        assert_eq!(expand_range("0.5:0.5:1"), vec![0.5]);
    }
}
