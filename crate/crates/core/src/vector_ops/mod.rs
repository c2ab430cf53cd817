//! Task-vector arithmetic: deltas between fine-tuned checkpoints, scaled
//! application, ensemble averaging, and cosine similarity.

mod arith;
mod error;
mod similarity;
mod task_vector;

pub use arith::{
    apply_ensemble, apply_ensemble_with, apply_files, apply_task_vector, apply_task_vector_with,
    check_applicable, compute_task_vector, ensemble_average, ApplyOptions, ApplySummary,
};
pub use error::{Result, VectorError};
pub use similarity::{
    cosine_similarity, map_norm_stats, norm_stats, per_tensor_similarity, similarity_matrix,
    Cosine, Granularity, NormStats, SimilarityMatrix, TensorStats,
};
pub use task_vector::{
    Provenance, TaskVector, KEY_BASE_SCHEMA, KEY_CONSTITUENTS, KEY_CREATED_FROM, KEY_DOMAIN,
    KEY_KIND, KEY_REAL_LABEL, KEY_SYN_LABEL, KIND_TASK_VECTOR,
};
