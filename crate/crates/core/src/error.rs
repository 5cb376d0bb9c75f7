use thiserror::Error;

/// Errors produced by the analytic solvers, the simulator and the region tools.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value outside the domain of {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("closed-form system is infeasible: {0}")]
    Infeasible(String),

    #[error("no initial condition converged ({0} attempted)")]
    AllDiverged(usize),

    #[error("not enough points to classify a shape: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("counter overflow in {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
