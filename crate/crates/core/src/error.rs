use thiserror::Error;

/// Errors for measure construction, the solver, and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "solver did not converge after {iterations} iterations (marginal error {marginal_err:.3e})"
    )]
    NotConverged {
        iterations: usize,
        marginal_err: f64,
    },

    #[error("direction is not tangent to the simplex (coordinate sum {0:.3e})")]
    NotTangent(f64),

    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("all {0} bootstrap replicates failed to converge")]
    AllReplicatesFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
