//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for all fallible operations in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition (non-finite value,
    /// non-positive period, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration is internally inconsistent or unusable
    /// (k >= |V|, degenerate domain, collapsed hierarchy level, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Two pieces of data that must agree by construction do not
    /// (shape mismatches between tensors, graphs and node sets).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An API was driven in an unsupported order (backward before forward,
    /// rollout on an unbuilt hierarchy).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data is semantically invalid (zero-length edge in a loss, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A serialized artifact does not match its expected layout.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// A numeric value that must be finite is not. Carries the location
    /// (parameter name, rollout step, ...) for diagnostics.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
