use std::path::PathBuf;
use std::process::ExitCode;

use bdmut_cli::config::{self, parse_override, parse_text, ConfigError, ExperimentSpec};
use bdmut_cli::{run, sweep, CliError, Experiment};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdmut", version, about = "Birth-death-mutation models of a phenotype distribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run one experiment per value of a single key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to vary, e.g. `model.D`.
        #[arg(long)]
        param: String,
        /// Comma-separated values or an inclusive range `a:b:step`.
        #[arg(long)]
        values: String,
    },
    /// List the built-in presets.
    Presets,
    /// Resolve the configuration and print its manifest without running.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    preset: Option<String>,
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set sweep.gamma_grid=...`.
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Shorthand for `--set sweep.times=...`.
    #[arg(long)]
    times: Option<String>,
    /// Directory under which `run.output` is created.
    #[arg(long, env = "BDMUT_OUTPUT_ROOT", default_value = ".")]
    output_root: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentSpec, ConfigError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                parse_text(&text)?
            }
            None => Vec::new(),
        };
        let mut overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(g) = &self.gamma_grid {
            overrides.push(("sweep.gamma_grid".into(), g.clone()));
        }
        if let Some(t) = &self.times {
            overrides.push(("sweep.times".into(), t.clone()));
        }
        ExperimentSpec::resolve(self.preset.as_deref(), &file, &overrides)
    }
}

fn sweep_values(raw: &str) -> Vec<String> {
    if raw.contains(':') {
        config::expand_range(raw).iter().map(|v| v.to_string()).collect()
    } else {
        raw.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Presets => {
            for p in config::PRESETS {
                println!("{p:8} {}", config::preset_description(p));
            }
            Ok(())
        }
        Command::Validate(common) => {
            let spec = common.resolve()?;
            Experiment::from_spec(spec.clone())?;
            print!("{}", spec.manifest());
            Ok(())
        }
        Command::Run(common) => {
            let exp = Experiment::from_spec(common.resolve()?)?;
            let dir = common.output_root.join(&exp.output);
            run(&exp, &dir)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Sweep { common, param, values } => {
            let spec = common.resolve()?;
            let values = sweep_values(&values);
            if values.is_empty() {
                return Err(ConfigError::Inconsistent("--values is empty".into()).into());
            }
            let points = sweep(&spec, &param, &values, &common.output_root)?;
            let failed = points
                .iter()
                .filter(|p| match &p.outcome {
                    Ok(_) => false,
                    Err(e) => {
                        eprintln!("point {}={}: {e}", param, p.value);
                        true
                    }
                })
                .count();
            if failed == 0 {
                Ok(())
            } else if failed == points.len() {
                Err(CliError::SweepFailed { total: failed })
            } else {
                Err(CliError::PartialSweep {
                    failed,
                    total: points.len(),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
