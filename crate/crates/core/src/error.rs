//! Error types shared across the library.
//!
//! Errors split into two broad families so that callers (notably the CLI)
//! can map them onto distinct exit codes: [`CoreError::is_numeric`] marks
//! failures of the numeric machinery (non-finite activations, degenerate
//! spectra), everything else is a data/usage problem.

use thiserror::Error;

/// Unified error type for dataset handling, model training and inference.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input files or in-memory datasets violate the documented contracts.
    #[error("data error: {0}")]
    Data(String),

    /// Configuration values are inconsistent or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV parse or encode failure, with file context where available.
    #[error("csv error: {0}")]
    Csv(String),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Non-finite values or degenerate numerics inside the model machinery.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CoreError {
    /// Convenience constructor for data contract violations.
    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }

    /// Convenience constructor for configuration problems.
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    /// Convenience constructor for numeric failures.
    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }

    /// True when the failure came from numeric machinery rather than
    /// user input; the CLI maps this onto a dedicated exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, CoreError::Numeric(_))
    }
}

impl From<csv::Error> for CoreError {
    fn from(e: csv::Error) -> Self {
        CoreError::Csv(e.to_string())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
