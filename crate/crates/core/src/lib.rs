//! Numerical tools for birth-dependent mutation models: fitness landscapes
//! with separate birth and survival optima, method-of-lines solvers for the
//! birth-weighted and standard replicator-mutator equations, stochastic
//! individual-based simulators, and the stationary spectral problem.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod ibm;
pub mod landscape;
pub mod pde;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{Axis, Grid, GridField};
pub use landscape::{reflect, Domain, Family, PhenotypeLandscape};
pub use pde::{Model, ModelKind};
pub use trajectory::Trajectory;
