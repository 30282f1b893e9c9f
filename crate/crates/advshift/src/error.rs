use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration is structurally invalid (shape mismatch, bad field value).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A gradient or loss became non-finite during training. Aborts the run
    /// rather than skipping the batch so attack/loss bugs surface immediately.
    #[error("non-finite value at epoch {epoch}, batch {batch}: losses {losses:?}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        losses: Vec<f64>,
    },

    /// Numerical failure outside training (e.g. indefinite covariance).
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the CLI: config/usage problems exit 2, runtime failures 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) => 2,
            _ => 1,
        }
    }
}
