//! Crate-wide error type and result alias.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
///
/// The CLI maps these onto documented exit codes: configuration problems
/// exit with 2, data/IO problems with 3, numeric divergence with 4 and
/// missing capabilities with 5.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or inconsistent config combination.
    #[error("config error: {0}")]
    Config(String),

    /// A sample or image violated a value-domain contract.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched image/tensor dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Manifest, dataset or image-file problem.
    #[error("data error: {0}")]
    Data(String),

    /// Filesystem failure, with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Corrupt, truncated or mismatched checkpoint container.
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite loss.
    #[error("numeric divergence at epoch {epoch}, batch {batch}: {message}")]
    Divergence {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// A non-finite value appeared outside of training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Requested feature is disabled in this configuration.
    #[error("capability error: {0}")]
    Capability(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Dimension(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => 3,
            Error::Divergence { .. } | Error::Numeric(_) => 4,
            Error::Capability(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
