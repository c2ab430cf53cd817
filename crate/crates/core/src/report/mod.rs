//! Tables (CSV) and figures (SVG) for similarity matrices, sweep curves,
//! domain-count curves and relative-WER tables.

mod build;
mod bundle;
mod error;
pub mod svg;

pub use build::{
    build_ablation_report, build_similarity_report, build_sweep_report, build_table_report,
    matrix_csv, prefixed_labels,
};
pub use bundle::{Artifact, ArtifactKind, Manifest, ManifestEntry, ReportBundle};
pub use error::{ReportError, Result};
