//! Unified error type for the laboratory.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied parameter (bad spec field, unknown tag, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A model assembled from valid-looking parameters is unusable
    /// (e.g. a block covariance that fails to factorize).
    #[error("model error: {0}")]
    Model(String),

    /// Matrix/vector shape mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A covariance matrix is not positive semidefinite (beyond repairable
    /// roundoff).
    #[error("covariance not positive semidefinite: {0}")]
    NonPsd(String),

    /// A quadrature did not reach its documented tolerance; carries the best
    /// available estimate so callers can decide whether to proceed.
    #[error("accuracy target not reached: requested {requested:e}, achieved {achieved:e} (estimate {estimate:e})")]
    Accuracy {
        requested: f64,
        achieved: f64,
        estimate: f64,
    },

    /// Non-finite values appeared during a simulation or integration.
    #[error("numerical divergence at step {step} (t = {t}): {what}")]
    Divergence { step: usize, t: f64, what: String },

    /// An input stream ran out of rows before the run finished.
    #[error("sample source exhausted: {0}")]
    Exhausted(String),

    /// Degenerate data (zero-variance column, empty sample, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config/parameter, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Model(_) | Error::Shape(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 4,
            _ => 2,
        }
    }
}
