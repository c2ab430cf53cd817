use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::{Result, VectorError};
use crate::tensor_store::{
    read_checkpoint, schema_of, write_checkpoint, Digest256, Fingerprint, ModelSchema, TensorMap,
};

pub const KEY_KIND: &str = "synvec.kind";
pub const KEY_BASE_SCHEMA: &str = "synvec.base_schema";
pub const KEY_DOMAIN: &str = "synvec.domain";
pub const KEY_REAL_LABEL: &str = "synvec.real_label";
pub const KEY_SYN_LABEL: &str = "synvec.syn_label";
pub const KEY_CREATED_FROM: &str = "synvec.created_from";
pub const KEY_CONSTITUENTS: &str = "synvec.constituents";
pub const KIND_TASK_VECTOR: &str = "task_vector";

/// Where a task vector came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_domain: Option<String>,
    pub real_label: Option<String>,
    pub syn_label: Option<String>,
    /// Identifiers of the (real, synthetic) checkpoints the deltas were taken from.
    pub created_from: Option<(String, String)>,
    /// Source domains of the vectors an ensemble was averaged from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constituents: Vec<String>,
}

impl Provenance {
    pub fn domain(label: impl Into<String>) -> Self {
        Self {
            source_domain: Some(label.into()),
            ..Self::default()
        }
    }

    fn write_into(&self, meta: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                meta.insert(k.to_string(), v.clone());
            }
        };
        put(KEY_DOMAIN, &self.source_domain);
        put(KEY_REAL_LABEL, &self.real_label);
        put(KEY_SYN_LABEL, &self.syn_label);
        if let Some((real, syn)) = &self.created_from {
            meta.insert(
                KEY_CREATED_FROM.into(),
                serde_json::to_string(&[real, syn]).expect("strings serialize"),
            );
        }
        if !self.constituents.is_empty() {
            meta.insert(
                KEY_CONSTITUENTS.into(),
                serde_json::to_string(&self.constituents).expect("strings serialize"),
            );
        }
    }

    fn read_from(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| meta.get(k).cloned();
        let created_from = match meta.get(KEY_CREATED_FROM) {
            Some(s) => {
                let [real, syn]: [String; 2] = serde_json::from_str(s).map_err(|e| {
                    VectorError::NotATaskVector(format!("bad {KEY_CREATED_FROM}: {e}"))
                })?;
                Some((real, syn))
            }
            None => None,
        };
        let constituents = match meta.get(KEY_CONSTITUENTS) {
            Some(s) => serde_json::from_str(s).map_err(|e| {
                VectorError::NotATaskVector(format!("bad {KEY_CONSTITUENTS}: {e}"))
            })?,
            None => Vec::new(),
        };
        Ok(Self {
            source_domain: get(KEY_DOMAIN),
            real_label: get(KEY_REAL_LABEL),
            syn_label: get(KEY_SYN_LABEL),
            created_from,
            constituents,
        })
    }
}

/// Per-parameter deltas between two fine-tuned checkpoints.
///
/// Deltas are stored in the compute dtype of the parents (F16 parents give
/// F32 deltas) so that small differences survive. `base_schema` is the
/// fingerprint of that widened parent schema and always equals the schema
/// fingerprint of `deltas`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector {
    deltas: TensorMap,
    base_schema: Fingerprint,
    provenance: Provenance,
}

impl TaskVector {
    /// Wraps precomputed deltas. Fails if any delta is non-finite.
    pub fn from_deltas(mut deltas: TensorMap, provenance: Provenance) -> Result<Self> {
        if let Some((tensor, index)) = deltas.first_non_finite() {
            return Err(VectorError::NonFiniteResult {
                tensor: tensor.to_string(),
                index,
            });
        }
        deltas.metadata_mut().clear();
        let base_schema = Fingerprint::of_schema(&schema_of(&deltas));
        Ok(Self {
            deltas,
            base_schema,
            provenance,
        })
    }

    pub fn deltas(&self) -> &TensorMap {
        &self.deltas
    }

    pub fn base_schema(&self) -> &Fingerprint {
        &self.base_schema
    }

    pub fn schema(&self) -> ModelSchema {
        schema_of(&self.deltas)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    /// Label used in reports: the source domain if known.
    pub fn label(&self) -> Option<&str> {
        self.provenance.source_domain.as_deref()
    }

    /// Every delta multiplied by `factor` (rounded to the storage dtype).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = TensorMap::new();
        for (name, t) in self.deltas.iter() {
            let data = crate::tensor_store::TensorData::from_f64(
                t.dtype(),
                t.to_f64_vec().into_iter().map(|x| x * factor),
            );
            out.insert(name, crate::tensor_store::Tensor::new(t.shape().to_vec(), data)?)?;
        }
        Self::from_deltas(out, self.provenance.clone())
    }

    /// The container form: deltas plus provenance under `synvec.*` metadata keys.
    pub fn to_tensor_map(&self) -> TensorMap {
        let mut map = self.deltas.clone();
        let meta = map.metadata_mut();
        meta.insert(KEY_KIND.into(), KIND_TASK_VECTOR.into());
        meta.insert(KEY_BASE_SCHEMA.into(), self.base_schema.schema_hash.to_hex());
        self.provenance.write_into(meta);
        map
    }

    /// Parses the container form, checking the recorded base schema against the deltas.
    pub fn from_tensor_map(mut map: TensorMap) -> Result<Self> {
        let meta = map.metadata();
        check_header(meta, &schema_of(&map))?;
        let provenance = Provenance::read_from(meta)?;
        map.metadata_mut().clear();
        Self::from_deltas(map, provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(&self.to_tensor_map(), path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor_map(read_checkpoint(path)?)
    }
}

/// Validates the `synvec.kind` and `synvec.base_schema` keys against `schema`.
pub(crate) fn check_header(meta: &BTreeMap<String, String>, schema: &ModelSchema) -> Result<Digest256> {
    match meta.get(KEY_KIND).map(String::as_str) {
        Some(KIND_TASK_VECTOR) => {}
        Some(other) => {
            return Err(VectorError::NotATaskVector(format!(
                "{KEY_KIND} is '{other}', expected '{KIND_TASK_VECTOR}'"
            )))
        }
        None => return Err(VectorError::NotATaskVector(format!("missing {KEY_KIND}"))),
    }
    let recorded = meta
        .get(KEY_BASE_SCHEMA)
        .and_then(|s| Digest256::from_hex(s))
        .ok_or_else(|| VectorError::NotATaskVector(format!("missing or invalid {KEY_BASE_SCHEMA}")))?;
    let actual = schema.hash();
    if recorded != actual {
        return Err(VectorError::NotATaskVector(format!(
            "{KEY_BASE_SCHEMA} {recorded} does not match the stored deltas ({actual})"
        )));
    }
    Ok(recorded)
}
