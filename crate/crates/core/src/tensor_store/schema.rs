use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{DType, TensorMap};

/// One (name, dtype, shape) row of a schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

/// Canonical listing of a checkpoint's tensors, sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSchema {
    entries: Vec<SchemaEntry>,
}

impl ModelSchema {
    /// Builds a schema from arbitrary-order entries. Duplicate names keep the last entry.
    pub fn from_entries(entries: impl IntoIterator<Item = SchemaEntry>) -> Self {
        let by_name: BTreeMap<String, SchemaEntry> =
            entries.into_iter().map(|e| (e.name.clone(), e)).collect();
        Self {
            entries: by_name.into_values().collect(),
        }
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SchemaEntry> {
        self.entries
            .binary_search_by(|e| e.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// The schema arithmetic sees: every dtype replaced by its compute dtype.
    pub fn widened(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| SchemaEntry {
                    dtype: e.dtype.compute(),
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Deterministic byte serialization:
    /// `[["name","DTYPE",[d0,d1,...]],...]` with no whitespace.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = String::from("[");
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push('[');
            out.push_str(&serde_json::to_string(&e.name).expect("string serializes"));
            out.push_str(",\"");
            out.push_str(e.dtype.as_str());
            out.push_str("\",[");
            let dims: Vec<String> = e.shape.iter().map(usize::to_string).collect();
            out.push_str(&dims.join(","));
            out.push_str("]]");
        }
        out.push(']');
        out.into_bytes()
    }

    pub fn hash(&self) -> Digest256 {
        Digest256::of(&self.canonical_bytes())
    }
}

/// A SHA-256 digest rendered as lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest256 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest256 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
    }
}

/// Schema digest plus an optional digest of the raw data section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub schema_hash: Digest256,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub content_hash: Option<Digest256>,
}

impl Fingerprint {
    pub fn of_schema(schema: &ModelSchema) -> Self {
        Self {
            schema_hash: schema.hash(),
            content_hash: None,
        }
    }

    /// Schema fingerprint and, when `with_content`, a digest of the
    /// canonical data section.
    pub fn of_map(map: &TensorMap, with_content: bool) -> Self {
        let content_hash = with_content.then(|| {
            let mut hasher = Sha256::new();
            let mut buf = Vec::new();
            for (_, t) in map.iter() {
                buf.clear();
                t.data().encode_le(&mut buf);
                hasher.update(&buf);
            }
            Digest256(hasher.finalize().into())
        });
        Self {
            schema_hash: schema_of(map).hash(),
            content_hash,
        }
    }
}

/// Sorted (name, dtype, shape) listing of a map.
pub fn schema_of(map: &TensorMap) -> ModelSchema {
    ModelSchema {
        entries: map
            .iter()
            .map(|(name, t)| SchemaEntry {
                name: name.to_string(),
                dtype: t.dtype(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    }
}

/// A tensor present on both sides whose dtype or shape differs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMismatch {
    pub name: String,
    pub a_dtype: DType,
    pub a_shape: Vec<usize>,
    pub b_dtype: DType,
    pub b_shape: Vec<usize>,
}

/// Outcome of comparing two schemas. Incompatibility is data, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatReport {
    pub ok: bool,
    pub missing_in_a: Vec<String>,
    pub missing_in_b: Vec<String>,
    pub mismatched: Vec<EntryMismatch>,
}

impl CompatReport {
    pub fn mismatched_names(&self) -> Vec<&str> {
        self.mismatched.iter().map(|m| m.name.as_str()).collect()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("schemas compatible");
        }
        let mut parts = Vec::new();
        if !self.missing_in_a.is_empty() {
            parts.push(format!("missing in first: {:?}", self.missing_in_a));
        }
        if !self.missing_in_b.is_empty() {
            parts.push(format!("missing in second: {:?}", self.missing_in_b));
        }
        if !self.mismatched.is_empty() {
            parts.push(format!("dtype/shape mismatch: {:?}", self.mismatched_names()));
        }
        f.write_str(&parts.join("; "))
    }
}

pub fn schema_compatible(a: &ModelSchema, b: &ModelSchema) -> CompatReport {
    let mut missing_in_a = Vec::new();
    let mut missing_in_b = Vec::new();
    let mut mismatched = Vec::new();

    let (mut i, mut j) = (0, 0);
    let (ea, eb) = (a.entries(), b.entries());
    while i < ea.len() || j < eb.len() {
        match (ea.get(i), eb.get(j)) {
            (Some(x), Some(y)) if x.name == y.name => {
                if x.dtype != y.dtype || x.shape != y.shape {
                    mismatched.push(EntryMismatch {
                        name: x.name.clone(),
                        a_dtype: x.dtype,
                        a_shape: x.shape.clone(),
                        b_dtype: y.dtype,
                        b_shape: y.shape.clone(),
                    });
                }
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.name < y.name => {
                missing_in_b.push(x.name.clone());
                i += 1;
            }
            (Some(_), Some(y)) => {
                missing_in_a.push(y.name.clone());
                j += 1;
            }
            (Some(x), None) => {
                missing_in_b.push(x.name.clone());
                i += 1;
            }
            (None, Some(y)) => {
                missing_in_a.push(y.name.clone());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }

    CompatReport {
        ok: missing_in_a.is_empty() && missing_in_b.is_empty() && mismatched.is_empty(),
        missing_in_a,
        missing_in_b,
        mismatched,
    }
}
