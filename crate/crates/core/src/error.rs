use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad bounds, empty dataset, single-class training set, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument is outside the domain of the operation (time out of range,
    /// unknown person id, degenerate geometry, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A contract between adjacent pipeline stages was violated (shape
    /// mismatch, missing forward cache, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A resampling target is not covered by the measurement stream.
    #[error("synchronization error: no samples bracket target time {target_time}")]
    Synchronization { target_time: f64 },

    /// A tampering operation was rejected (e.g. a pose-identical donor frame).
    #[error("tamper rejected: {0}")]
    Rejection(String),

    /// A metric is undefined for the given inputs (empty class, all-zero tensors).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Filesystem or encoding failure.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but does not parse as the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
