use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::error::{ReportError, Result};
use crate::tensor_store::Digest256;

/// One emitted file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Table,
    Figure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: ArtifactKind,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub tool: String,
    pub tool_version: String,
    /// Input label -> fingerprint or other identifying string.
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<ManifestEntry>,
    /// Digest over `files` (path and digest of each); stable across regenerations.
    pub bundle_digest: String,
    /// Wall-clock stamp; not covered by `bundle_digest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// Tables and figures for one report, plus the provenance of their inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub name: String,
    pub tables: Vec<Artifact>,
    pub figures: Vec<Artifact>,
    pub inputs: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            tables: Vec::new(),
            figures: Vec::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn table(&self, file_name: &str) -> Option<&str> {
        find(&self.tables, file_name)
    }

    pub fn figure(&self, file_name: &str) -> Option<&str> {
        find(&self.figures, file_name)
    }

    pub fn manifest(&self) -> Manifest {
        let entries = |arts: &[Artifact], kind| {
            arts.iter()
                .map(|a| ManifestEntry {
                    path: a.file_name.clone(),
                    kind,
                    sha256: Digest256::of(a.content.as_bytes()).to_hex(),
                    bytes: a.content.len(),
                })
                .collect::<Vec<_>>()
        };
        let mut files = entries(&self.tables, ArtifactKind::Table);
        files.extend(entries(&self.figures, ArtifactKind::Figure));
        let listing: String = files
            .iter()
            .map(|f| format!("{}  {}\n", f.sha256, f.path))
            .collect();
        Manifest {
            name: self.name.clone(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs.clone(),
            bundle_digest: Digest256::of(listing.as_bytes()).to_hex(),
            files,
            generated_at: None,
        }
    }

    /// Writes `root/<name>/` with every artifact and `manifest.json`; returns the directory.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        self.write_with(root, None)
    }

    /// As [`write`](Self::write), recording `generated_at` in the manifest.
    pub fn write_with(&self, root: &Path, generated_at: Option<String>) -> Result<PathBuf> {
        let dir = root.join(&self.name);
        std::fs::create_dir_all(&dir).map_err(|e| ReportError::io(&dir, e))?;
        for a in self.tables.iter().chain(&self.figures) {
            let path = dir.join(&a.file_name);
            std::fs::write(&path, &a.content).map_err(|e| ReportError::io(&path, e))?;
        }
        let mut manifest = self.manifest();
        manifest.generated_at = generated_at;
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        let path = dir.join("manifest.json");
        std::fs::write(&path, json).map_err(|e| ReportError::io(&path, e))?;
        Ok(dir)
    }
}

fn find<'a>(arts: &'a [Artifact], name: &str) -> Option<&'a str> {
    arts.iter()
        .find(|a| a.file_name == name)
        .map(|a| a.content.as_str())
}

/// File-name-safe version of a label.
pub(crate) fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let s = s.trim_matches('-').to_string();
    if s.is_empty() {
        "series".to_string()
    } else {
        s
    }
}
