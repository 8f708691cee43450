//! Error types shared across the crate.
//!
//! Three families map onto the process exit codes of the command line tool:
//! configuration errors (invalid parameter values), data errors (malformed
//! or inconsistent observation files), and numerical errors (non-finite
//! states, failed factorizations, degenerate estimators).

use thiserror::Error;

/// Any failure the crate can produce; the CLI maps the variants onto
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numerical(#[from] NumericalError),
}

/// Invalid configuration: a parameter, geometry, or settings value that
/// fails its validity contract before any computation starts.
#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

/// Malformed or inconsistent input data (observation tables, sample files).
#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path} line {line}: {msg}")]
    Record {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Numerical failure during a computation that started from valid inputs.
#[derive(Debug, Error)]
pub enum NumericalError {
    #[error("non-finite {quantity} at {context}")]
    NonFinite { quantity: String, context: String },
    #[error("correlation matrix factorization failed: {0}")]
    Factorization(String),
    #[error("ensemble sampler stalled: acceptance {rate:.4} over the last {window} sweeps")]
    StalledSampler { rate: f64, window: usize },
    #[error("{0}")]
    Degenerate(String),
}

impl NumericalError {
    pub fn non_finite(quantity: impl Into<String>, context: impl Into<String>) -> Self {
        NumericalError::NonFinite {
            quantity: quantity.into(),
            context: context.into(),
        }
    }
}
