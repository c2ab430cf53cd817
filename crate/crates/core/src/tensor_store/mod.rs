//! Checkpoint containers: typed tensor maps, the bit-exact single-file
//! format, schemas and fingerprints.

mod error;
mod format;
mod schema;
mod tensor;

pub use error::{Result, StoreError};
pub use format::{
    from_bytes, header_json, read_checkpoint, to_bytes, write_checkpoint, write_checkpoint_with,
    CheckpointWriter, MappedCheckpoint, WriteOptions, MAX_HEADER_LEN,
};
pub use schema::{
    schema_compatible, schema_of, CompatReport, Digest256, EntryMismatch, Fingerprint,
    ModelSchema, SchemaEntry,
};
pub use tensor::{ByteRange, DType, Tensor, TensorData, TensorMap, TensorMeta, METADATA_KEY};
