use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MfgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MfgError {
    /// An input fell outside the domain of a pointwise operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array dimensions or group counts do not line up.
    #[error("configuration error: {0}")]
    Config(String),

    /// A configuration parsed but broke one of the model invariants.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(
        "negative density {value:.3e} in group {group} state {state} at step {step}; \
         reduce the time step (dt = {dt})"
    )]
    StepSize {
        group: usize,
        state: &'static str,
        step: usize,
        value: f64,
        dt: f64,
    },

    #[error("numerical instability in {context} at step {step}")]
    NumericalInstability { context: &'static str, step: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid deviation: {0}")]
    Deviation(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
