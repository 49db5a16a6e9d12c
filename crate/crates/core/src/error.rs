use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants map onto the failure classes callers care about: bad configuration,
/// bad data, impossible geometry, numerical breakdown during training, and
/// persistence problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training error in `{param}`: {msg}")]
    Training { param: String, msg: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
