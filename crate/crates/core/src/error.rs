use std::path::PathBuf;

/// Errors produced across the photodepth pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("empty input: {0}")]
    Empty(String),
    /// Every pixel was removed by the validity/automask gate.
    #[error("degenerate batch: no pixel survives masking")]
    DegenerateBatch,
    /// Prediction has no variance (or too few samples) to fit scale and shift.
    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
