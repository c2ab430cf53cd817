use std::collections::BTreeMap;
use std::fmt;

use half::f16;
use serde::{Deserialize, Serialize};

use super::error::{Result, StoreError};

/// Key reserved by the container format for free-form string metadata.
pub const METADATA_KEY: &str = "__metadata__";

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DType {
    F16,
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F16 => 2,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F16 => "F16",
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F16" => Some(DType::F16),
            "F32" => Some(DType::F32),
            "F64" => Some(DType::F64),
            _ => None,
        }
    }

    /// The dtype arithmetic runs in: F16 widens to F32, the others are kept.
    pub fn compute(self) -> Self {
        match self {
            DType::F16 | DType::F32 => DType::F32,
            DType::F64 => DType::F64,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typed element storage. F16 keeps the raw half-precision values so that
/// reading and writing is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F16(Vec<f16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F16(_) => DType::F16,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F16(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` widened to f64 (exact for every stored dtype).
    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            TensorData::F16(v) => v[i].to_f64(),
            TensorData::F32(v) => v[i] as f64,
            TensorData::F64(v) => v[i],
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            TensorData::F16(v) => v.iter().map(|x| x.to_f64()).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    /// Builds storage of `dtype` from f64 values, rounding to nearest-even.
    pub fn from_f64(dtype: DType, values: impl IntoIterator<Item = f64>) -> Self {
        let values = values.into_iter();
        match dtype {
            DType::F16 => TensorData::F16(values.map(f16::from_f64).collect()),
            DType::F32 => TensorData::F32(values.map(|x| x as f32).collect()),
            DType::F64 => TensorData::F64(values.collect()),
        }
    }

    /// Index of the first NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        match self {
            TensorData::F16(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::F32(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::F64(v) => v.iter().position(|x| !x.is_finite()),
        }
    }

    pub fn non_finite_count(&self) -> usize {
        match self {
            TensorData::F16(v) => v.iter().filter(|x| !x.is_finite()).count(),
            TensorData::F32(v) => v.iter().filter(|x| !x.is_finite()).count(),
            TensorData::F64(v) => v.iter().filter(|x| !x.is_finite()).count(),
        }
    }

    /// Bitwise equality; distinguishes NaN payloads and signed zeros.
    pub fn bit_eq(&self, other: &TensorData) -> bool {
        match (self, other) {
            (TensorData::F16(a), TensorData::F16(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::F64(a), TensorData::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }

    pub(crate) fn byte_len(&self) -> usize {
        self.len() * self.dtype().size()
    }

    /// Appends the little-endian encoding of every element to `out`.
    pub(crate) fn encode_le(&self, out: &mut Vec<u8>) {
        out.reserve(self.byte_len());
        match self {
            TensorData::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    /// Decodes little-endian bytes; `bytes.len()` must be a multiple of the dtype size.
    pub(crate) fn decode_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F16 => TensorData::F16(
                bytes
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            ),
        }
    }
}

/// A named tensor's shape and values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let numel = numel(&shape).ok_or_else(|| StoreError::InvalidTensor {
            name: String::new(),
            reason: format!("shape {shape:?} overflows"),
        })?;
        if numel != data.len() {
            return Err(StoreError::InvalidTensor {
                name: String::new(),
                reason: format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(values))
    }

    pub fn from_f16(shape: Vec<usize>, values: Vec<f16>) -> Result<Self> {
        Self::new(shape, TensorData::F16(values))
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.to_f64_vec()
    }

    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape && self.data.bit_eq(&other.data)
    }
}

pub(crate) fn numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Half-open byte range of one tensor inside the data section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteRange {
    pub begin: u64,
    pub end: u64,
}

impl ByteRange {
    pub fn len(&self) -> u64 {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin == self.end
    }
}

/// Location and layout of a tensor inside a container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub byte_range: ByteRange,
}

impl TensorMeta {
    pub fn numel(&self) -> usize {
        numel(&self.shape).unwrap_or(usize::MAX)
    }
}

/// An ordered set of named tensors plus string metadata: the in-memory form
/// of a checkpoint. Iteration is always lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    tensors: BTreeMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor, replacing any previous tensor of the same name.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Option<Tensor>> {
        let name = name.into();
        validate_name(&name)?;
        Ok(self.tensors.insert(name, tensor))
    }

    /// Builder-style insert for fixtures and tests.
    pub fn with(mut self, name: impl Into<String>, tensor: Tensor) -> Result<Self> {
        self.insert(name, tensor)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    /// Total number of elements across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Size of the data section this map serializes to.
    pub fn data_bytes(&self) -> u64 {
        self.tensors.values().map(|t| t.data.byte_len() as u64).sum()
    }

    /// Canonical layout: lexicographic order, contiguous ranges from offset 0.
    pub fn metas(&self) -> Vec<TensorMeta> {
        let mut offset = 0u64;
        self.tensors
            .iter()
            .map(|(name, t)| {
                let len = t.data.byte_len() as u64;
                let meta = TensorMeta {
                    name: name.clone(),
                    dtype: t.dtype(),
                    shape: t.shape.clone(),
                    byte_range: ByteRange {
                        begin: offset,
                        end: offset + len,
                    },
                };
                offset += len;
                meta
            })
            .collect()
    }

    /// First non-finite element in canonical order, as (tensor name, flat index).
    pub fn first_non_finite(&self) -> Option<(&str, usize)> {
        self.iter()
            .find_map(|(name, t)| t.data.first_non_finite().map(|i| (name, i)))
    }

    /// True when every value is finite. Maps read from disk may carry
    /// NaN/inf; arithmetic rejects them unless explicitly permitted.
    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    /// Bitwise comparison of tensors and metadata.
    pub fn bit_eq(&self, other: &TensorMap) -> bool {
        self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }
}

pub(crate) fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(StoreError::InvalidTensor {
            name: name.to_string(),
            reason: "tensor names must be non-empty".into(),
        });
    }
    if name == METADATA_KEY {
        return Err(StoreError::InvalidTensor {
            name: name.to_string(),
            reason: format!("'{METADATA_KEY}' is reserved"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_values() {
        assert!(Tensor::from_f32(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_f32(vec![2, 0], vec![]).is_ok());
        assert_eq!(Tensor::from_f32(vec![], vec![1.0]).unwrap().numel(), 1);
    }

    #[test]
    fn reserved_and_empty_names_are_rejected() {
        let t = Tensor::from_f32(vec![1], vec![1.0]).unwrap();
        let mut m = TensorMap::new();
        assert!(m.insert("", t.clone()).is_err());
        assert!(m.insert(METADATA_KEY, t.clone()).is_err());
        assert!(m.insert("ok", t).is_ok());
    }

    #[test]
    fn metas_are_canonical_and_contiguous() {
        let m = TensorMap::new()
            .with("b", Tensor::from_f32(vec![1], vec![1.0]).unwrap())
            .unwrap()
            .with("a", Tensor::from_f16(vec![3], vec![f16::ONE; 3]).unwrap())
            .unwrap()
            .with("c", Tensor::from_f64(vec![0], vec![]).unwrap())
            .unwrap();
        let metas = m.metas();
        let names: Vec<_> = metas.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(metas[0].byte_range, ByteRange { begin: 0, end: 6 });
        assert_eq!(metas[1].byte_range, ByteRange { begin: 6, end: 10 });
        assert!(metas[2].byte_range.is_empty());
        assert_eq!(m.data_bytes(), 10);
    }

    #[test]
    fn non_finite_values_are_located() {
        let m = TensorMap::new()
            .with("a", Tensor::from_f32(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap()
            .with("b", Tensor::from_f32(vec![3], vec![0.0, f32::NAN, f32::INFINITY]).unwrap())
            .unwrap();
        assert_eq!(m.first_non_finite(), Some(("b", 1)));
        assert!(!m.is_finite());
    }
}
