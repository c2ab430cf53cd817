use crate::tensor_store::{CompatReport, Digest256, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error(transparent)]
    Store(#[from] StoreError),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(CompatReport),

    #[error("input tensor '{tensor}' holds a non-finite value at index {index}")]
    NonFiniteInput { tensor: String, index: usize },

    #[error("result tensor '{tensor}' became non-finite at index {index}")]
    NonFiniteResult { tensor: String, index: usize },

    #[error("scaling factor must be finite, got {0}")]
    NonFiniteLambda(f64),

    #[error("ensemble needs at least one task vector")]
    EmptyEnsemble,

    #[error("task vector #{index} has base schema {found}, expected {expected}")]
    FingerprintMismatch {
        index: usize,
        expected: Digest256,
        found: Digest256,
    },

    #[error("cosine similarity is undefined: {0} has zero norm")]
    ZeroNorm(String),

    #[error("not a task vector: {0}")]
    NotATaskVector(String),
}

impl VectorError {
    /// Snake-case error kind for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            VectorError::Store(e) => e.kind(),
            VectorError::SchemaMismatch(_) => "schema_mismatch",
            VectorError::NonFiniteInput { .. } => "non_finite_input",
            VectorError::NonFiniteResult { .. } => "non_finite_result",
            VectorError::NonFiniteLambda(_) => "non_finite_lambda",
            VectorError::EmptyEnsemble => "empty_ensemble",
            VectorError::FingerprintMismatch { .. } => "fingerprint_mismatch",
            VectorError::ZeroNorm(_) => "zero_norm",
            VectorError::NotATaskVector(_) => "not_a_task_vector",
        }
    }

    /// True for validation failures (schema, finiteness, arguments) as
    /// opposed to storage and I/O problems.
    pub fn is_domain_error(&self) -> bool {
        match self {
            VectorError::Store(e) => e.kind() != "io",
            _ => true,
        }
    }
}

pub type Result<T, E = VectorError> = std::result::Result<T, E>;
