//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("audio contains no samples: {0}")]
    EmptyAudio(PathBuf),

    #[error("{path}:{line}: bad annotation: {message}")]
    Annotation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("hypothesis ({omega},{phi}) cannot be sampled: {message}")]
    Unsamplable {
        omega: usize,
        phi: usize,
        message: String,
    },

    #[error("no positive frames in target sequence")]
    NoPositiveFrames,

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CoreError {
    /// Wrap an `io::Error` with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
