use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 2 intervals, got {0}")]
    GridTooCoarse(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("matrix is not symmetric positive definite (pivot {row} = {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero reference norm in relative error")]
    ZeroDenominator,

    #[error("duplicate training inputs {0} and {1} after normalization")]
    DuplicateInput(usize, usize),

    #[error("HAPOD received more chunks than announced ({0})")]
    TooManyChunks(usize),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed artifact {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
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
