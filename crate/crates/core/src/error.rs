//! Crate-wide error type.
//!
//! Errors split into the categories the command-line layer maps to exit codes:
//! configuration problems, numeric failures (non-convergence, loss of
//! positive definiteness, divergence), and I/O or format problems when
//! persisting datasets and checkpoints.

use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size mismatch between operands.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A numeric routine failed (non-convergence, indefinite matrix, divergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Invalid configuration or argument value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed on-disk data (manifest, payload, checkpoint).
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O error.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
