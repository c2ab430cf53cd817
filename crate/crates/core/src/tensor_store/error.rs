use std::path::PathBuf;

/// Failures raised while building, reading or writing checkpoint containers.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("truncated header: need {needed} bytes, file has {available}")]
    TruncatedHeader { needed: u64, available: u64 },

    #[error("header length {0} exceeds the {max} byte limit", max = super::format::MAX_HEADER_LEN)]
    HeaderTooLarge(u64),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("invalid header entry for tensor '{tensor}': {reason}")]
    InvalidEntry { tensor: String, reason: String },

    #[error("tensor '{tensor}' has unknown dtype '{dtype}'")]
    UnknownDtype { tensor: String, dtype: String },

    #[error("tensor '{0}' is declared more than once")]
    DuplicateTensor(String),

    #[error("tensor '{tensor}' spans {actual} bytes but its shape needs {expected}")]
    SizeMismatch {
        tensor: String,
        expected: u64,
        actual: u64,
    },

    #[error("byte ranges of tensors '{first}' and '{second}' overlap")]
    Overlap { first: String, second: String },

    #[error("data section has an uncovered gap at offset {offset}")]
    Gap { offset: u64 },

    #[error("data section truncated: tensor '{tensor}' ends at {end}, data section holds {available} bytes")]
    TruncatedData {
        tensor: String,
        end: u64,
        available: u64,
    },

    #[error("data section has {extra} trailing bytes after offset {covered}")]
    TrailingBytes { covered: u64, extra: u64 },

    #[error("invalid tensor '{name}': {reason}")]
    InvalidTensor { name: String, reason: String },

    #[error("tensor '{tensor}' holds a non-finite value at index {index}")]
    NonFinite { tensor: String, index: usize },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for the error kind, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::TruncatedHeader { .. } => "truncated_header",
            Self::HeaderTooLarge(_) => "header_too_large",
            Self::MalformedHeader(_) => "malformed_header",
            Self::InvalidEntry { .. } => "invalid_entry",
            Self::UnknownDtype { .. } => "unknown_dtype",
            Self::DuplicateTensor(_) => "duplicate_tensor",
            Self::SizeMismatch { .. } => "size_mismatch",
            Self::Overlap { .. } => "overlap",
            Self::Gap { .. } => "gap",
            Self::TruncatedData { .. } => "truncated_data",
            Self::TrailingBytes { .. } => "trailing_bytes",
            Self::InvalidTensor { .. } => "invalid_tensor",
            Self::NonFinite { .. } => "non_finite",
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
