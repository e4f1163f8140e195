use thiserror::Error;

/// Errors raised by the solvers, oracles and experiment harness.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subproblem solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("instance {instance}: {source}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<BundleError>,
    },

    #[error("missing constant `{constant}` required by {requirement}")]
    MissingConstant { constant: &'static str, requirement: &'static str },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BundleError>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(BundleError::Input(msg.into()))
}
