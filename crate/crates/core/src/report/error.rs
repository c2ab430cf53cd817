use std::path::PathBuf;

use crate::sweep::SweepError;
use crate::vector_ops::VectorError;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("invalid report input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Vector(#[from] VectorError),

    #[error(transparent)]
    Sweep(#[from] SweepError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ReportError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;
