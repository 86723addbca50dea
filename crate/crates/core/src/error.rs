use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decomposition level j0 = {j0} is not admissible; it must be below {max} for this grid")]
    InvalidLevel { j0: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coefficient layout does not match wavelet spec: {0}")]
    LayoutMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {requested} components but the achievable rank is {rank}")]
    RankExceeded { requested: usize, rank: usize },

    #[error("degenerate PLS direction at component {component}: no remaining covariance with the response")]
    DegenerateDirection { component: usize },

    #[error("binomial response must take values in {{0, 1}} (found {value} at row {row})")]
    NotBinary { row: usize, value: f64 },

    #[error("fitted mean {value} at row {row} is outside (0, 1)")]
    MeanOutOfRange { row: usize, value: f64 },

    #[error("covariate matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficientCovariates { columns: Vec<usize> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: field `{field}`: {message}")]
    Format {
        file: String,
        field: String,
        message: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(file: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
