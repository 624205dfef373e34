use std::path::PathBuf;

/// Errors raised by merging, optimization and checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("numerics: {0}")]
    Numerics(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint pool is empty")]
    EmptyPool,
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("simplex weights invalid: {0}")]
    Simplex(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite or divergent arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numerics(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
