//! Command-line driver: experiment files, presets, runs and sweeps.

pub mod config;
pub mod experiment;
pub mod runner;

pub use config::{ConfigError, ExperimentSpec};
pub use experiment::Experiment;
pub use runner::{run, sweep, CliError, RunSummary};
