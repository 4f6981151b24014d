use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the phenotype domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("initial bump of width {width} is under-resolved on a grid with spacing {spacing}")]
    UnderResolved { width: f64, spacing: f64 },

    #[error("field diverged (NaN or Inf) at step {step}, t = {time}")]
    Divergence { step: usize, time: f64 },

    #[error(
        "negative density {value:e} at node {node} (step {step}, t = {time}); refine the grid or reduce the time step"
    )]
    Monotonicity {
        step: usize,
        time: f64,
        node: usize,
        value: f64,
    },

    #[error("population went extinct at t = {time}")]
    Extinction { time: f64 },

    #[error("population size {size} exceeded the cap {cap} at t = {time}")]
    RunawayPopulation { time: f64, size: usize, cap: usize },

    #[error("eigensolver did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("principal eigenvector has a non-positive component {value:e} at node {node}")]
    NotPositive { node: usize, value: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("malformed field snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
