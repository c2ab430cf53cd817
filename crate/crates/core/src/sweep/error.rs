use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::vector_ops::VectorError;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("baseline WER must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("domain sets differ: {0}")]
    KeyMismatch(String),

    #[error(transparent)]
    Vector(#[from] VectorError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no successful evaluation records")]
    NoSuccessfulRecords,

    #[error("all {} evaluations failed; first: {}", .0.len(), .0.first().map(|f| f.message.as_str()).unwrap_or(""))]
    AllPointsFailed(Vec<PointFailure>),
}

impl SweepError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Why a single grid point produced no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Building the adapted checkpoint failed (schema, non-finite result).
    Apply,
    Io,
    Spawn,
    Exit,
    Timeout,
    BadOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub lambda: f64,
    /// Domain count, for ablation points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub kind: FailureKind,
    pub message: String,
}

pub type Result<T, E = SweepError> = std::result::Result<T, E>;
