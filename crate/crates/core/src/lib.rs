//! Task-vector arithmetic for synthetic-to-real domain adaptation of
//! model checkpoints.

pub mod tensor_store;
pub mod vector_ops;
pub mod sweep;
pub mod toy;
pub mod report;
