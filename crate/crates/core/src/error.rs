use thiserror::Error;

use crate::rotor::BasisState;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value or unit kind is not supported.
    #[error("configuration error: {0}")]
    Config(String),

    /// RK4 step too coarse for the block being propagated.
    #[error("norm drift {drift:e} exceeds {tolerance:e}; retry with dt <= {suggested_dt_ps} ps")]
    StepSize {
        drift: f64,
        tolerance: f64,
        suggested_dt_ps: f64,
    },

    /// The rotational basis is truncated too early for the requested temperature.
    #[error(
        "J_max = {j_max} truncates the partition function (top shell carries {relative:e} of Z); \
         use J_max >= {required}"
    )]
    Truncation {
        j_max: u32,
        relative: f64,
        required: u32,
    },

    /// Propagation of one ensemble member failed.
    #[error("ensemble member {state} failed: {source}")]
    Member {
        state: BasisState,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
