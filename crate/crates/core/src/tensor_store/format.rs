//! The single-file container layout:
//!
//! ```text
//! [0..8)        little-endian u64 H, the header length
//! [8..8+H)      UTF-8 JSON: {"__metadata__": {..}, "<name>": {"dtype", "shape", "data_offsets"}, ..}
//! [8+H..)       raw little-endian tensor data, addressed by data_offsets
//! ```
//!
//! Reading goes through a memory map so the only transient allocation is the
//! decoded tensor itself. Writing streams through a fixed-size buffer into a
//! temporary file that is renamed over the destination on success.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer};
use tempfile::NamedTempFile;

use super::error::{Result, StoreError};
use super::schema::{ModelSchema, SchemaEntry};
use super::tensor::{
    numel, validate_name, ByteRange, DType, Tensor, TensorData, TensorMap, TensorMeta,
    METADATA_KEY,
};

/// Headers above this size are rejected before any allocation.
pub const MAX_HEADER_LEN: u64 = 100 * 1024 * 1024;

const WRITE_CHUNK_ELEMS: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Accept NaN and infinities in the written data.
    pub allow_non_finite: bool,
}

/// Reads a checkpoint fully into memory.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<TensorMap> {
    MappedCheckpoint::open(path)?.to_map()
}

/// Writes `map` canonically; rejects non-finite values.
pub fn write_checkpoint(map: &TensorMap, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint_with(map, path, WriteOptions::default())
}

pub fn write_checkpoint_with(
    map: &TensorMap,
    path: impl AsRef<Path>,
    opts: WriteOptions,
) -> Result<()> {
    if !opts.allow_non_finite {
        check_finite(map)?;
    }
    let mut writer = CheckpointWriter::create(path, map.metas(), map.metadata().clone())?;
    for (name, tensor) in map.iter() {
        writer.write_tensor(name, tensor.data())?;
    }
    writer.finish()
}

/// Serializes `map` to an in-memory container (same bytes `write_checkpoint` produces).
pub fn to_bytes(map: &TensorMap) -> Vec<u8> {
    let header = header_json(&map.metas(), map.metadata());
    let mut out = Vec::with_capacity(8 + header.len() + map.data_bytes() as usize);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (_, t) in map.iter() {
        t.data().encode_le(&mut out);
    }
    out
}

/// Parses an in-memory container.
pub fn from_bytes(bytes: &[u8]) -> Result<TensorMap> {
    let layout = Layout::parse(bytes)?;
    layout.decode_all(bytes)
}

fn check_finite(map: &TensorMap) -> Result<()> {
    match map.first_non_finite() {
        Some((tensor, index)) => Err(StoreError::NonFinite {
            tensor: tensor.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Canonical header JSON: metadata first (omitted when empty), then tensors
/// in the given order with keys dtype, shape, data_offsets; no whitespace.
pub fn header_json(metas: &[TensorMeta], metadata: &BTreeMap<String, String>) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("string serializes");
    let mut out = String::from("{");
    let mut first = true;
    if !metadata.is_empty() {
        out.push_str(&quote(METADATA_KEY));
        out.push_str(":{");
        for (i, (k, v)) in metadata.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&quote(k));
            out.push(':');
            out.push_str(&quote(v));
        }
        out.push('}');
        first = false;
    }
    for m in metas {
        if !first {
            out.push(',');
        }
        first = false;
        let dims: Vec<String> = m.shape.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{}:{{\"dtype\":\"{}\",\"shape\":[{}],\"data_offsets\":[{},{}]}}",
            quote(&m.name),
            m.dtype,
            dims.join(","),
            m.byte_range.begin,
            m.byte_range.end
        ));
    }
    out.push('}');
    out
}

/// Header entries in file order, keeping duplicates so they can be reported.
struct HeaderEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for HeaderEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = HeaderEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry::<String, serde_json::Value>()? {
                    entries.push(entry);
                }
                Ok(HeaderEntries(entries))
            }
        }
        d.deserialize_map(EntriesVisitor)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    dtype: String,
    shape: Vec<u64>,
    data_offsets: [u64; 2],
}

/// Validated header plus the offset of the data section.
#[derive(Debug, Clone)]
struct Layout {
    data_start: usize,
    /// Sorted by name.
    metas: Vec<TensorMeta>,
    metadata: BTreeMap<String, String>,
}

impl Layout {
    fn parse(bytes: &[u8]) -> Result<Self> {
        let available = bytes.len() as u64;
        if available < 8 {
            return Err(StoreError::TruncatedHeader { needed: 8, available });
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        if header_len > MAX_HEADER_LEN {
            return Err(StoreError::HeaderTooLarge(header_len));
        }
        let needed = 8 + header_len;
        if needed > available {
            return Err(StoreError::TruncatedHeader { needed, available });
        }
        let header = &bytes[8..needed as usize];
        let header = std::str::from_utf8(header)
            .map_err(|e| StoreError::MalformedHeader(format!("header is not UTF-8: {e}")))?;
        let HeaderEntries(entries) = serde_json::from_str(header)
            .map_err(|e| StoreError::MalformedHeader(e.to_string()))?;

        let mut metadata = BTreeMap::new();
        let mut metas = Vec::with_capacity(entries.len());
        let mut seen = HashSet::new();
        for (name, value) in entries {
            if !seen.insert(name.clone()) {
                return Err(StoreError::DuplicateTensor(name));
            }
            if name == METADATA_KEY {
                metadata = parse_metadata(value)?;
                continue;
            }
            metas.push(parse_entry(name, value)?);
        }

        let data_len = available - needed;
        validate_ranges(&metas, data_len)?;
        metas.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(Self {
            data_start: needed as usize,
            metas,
            metadata,
        })
    }

    fn raw<'a>(&self, bytes: &'a [u8], meta: &TensorMeta) -> &'a [u8] {
        let begin = self.data_start + meta.byte_range.begin as usize;
        let end = self.data_start + meta.byte_range.end as usize;
        &bytes[begin..end]
    }

    fn decode(&self, bytes: &[u8], meta: &TensorMeta) -> Result<Tensor> {
        let data = TensorData::decode_le(meta.dtype, self.raw(bytes, meta));
        Tensor::new(meta.shape.clone(), data).map_err(|e| match e {
            StoreError::InvalidTensor { reason, .. } => StoreError::InvalidTensor {
                name: meta.name.clone(),
                reason,
            },
            other => other,
        })
    }

    fn decode_all(&self, bytes: &[u8]) -> Result<TensorMap> {
        let mut map = TensorMap::new();
        for meta in &self.metas {
            map.insert(meta.name.clone(), self.decode(bytes, meta)?)?;
        }
        *map.metadata_mut() = self.metadata.clone();
        Ok(map)
    }
}

fn parse_metadata(value: serde_json::Value) -> Result<BTreeMap<String, String>> {
    let serde_json::Value::Object(obj) = value else {
        return Err(StoreError::MalformedHeader(format!(
            "'{METADATA_KEY}' must be an object"
        )));
    };
    obj.into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            other => Err(StoreError::MalformedHeader(format!(
                "metadata value for '{k}' must be a string, got {other}"
            ))),
        })
        .collect()
}

fn parse_entry(name: String, value: serde_json::Value) -> Result<TensorMeta> {
    validate_name(&name).map_err(|_| StoreError::InvalidEntry {
        tensor: name.clone(),
        reason: "invalid tensor name".into(),
    })?;
    let raw: RawEntry = serde_json::from_value(value).map_err(|e| StoreError::InvalidEntry {
        tensor: name.clone(),
        reason: e.to_string(),
    })?;
    let dtype = DType::parse(&raw.dtype).ok_or_else(|| StoreError::UnknownDtype {
        tensor: name.clone(),
        dtype: raw.dtype.clone(),
    })?;
    let shape: Vec<usize> = raw
        .shape
        .iter()
        .map(|&d| usize::try_from(d))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| StoreError::InvalidEntry {
            tensor: name.clone(),
            reason: "dimension does not fit in usize".into(),
        })?;
    let [begin, end] = raw.data_offsets;
    if end < begin {
        return Err(StoreError::InvalidEntry {
            tensor: name,
            reason: format!("data_offsets [{begin}, {end}] are reversed"),
        });
    }
    let expected = numel(&shape)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| StoreError::InvalidEntry {
            tensor: name.clone(),
            reason: format!("shape {shape:?} overflows"),
        })? as u64;
    if end - begin != expected {
        return Err(StoreError::SizeMismatch {
            tensor: name,
            expected,
            actual: end - begin,
        });
    }
    Ok(TensorMeta {
        name,
        dtype,
        shape,
        byte_range: ByteRange { begin, end },
    })
}

/// Ranges must tile `[0, data_len)` exactly: no overlap, no gap, nothing past
/// the end, nothing left over.
fn validate_ranges(metas: &[TensorMeta], data_len: u64) -> Result<()> {
    let mut order: Vec<&TensorMeta> = metas.iter().collect();
    order.sort_by(|a, b| {
        (a.byte_range.begin, a.byte_range.end, &a.name).cmp(&(b.byte_range.begin, b.byte_range.end, &b.name))
    });

    let mut cursor = 0u64;
    // Zero-length ranges occupy no bytes; they only need to lie within the
    // covered region.
    let mut last_nonempty: Option<&TensorMeta> = None;
    for meta in &order {
        let r = meta.byte_range;
        if r.is_empty() {
            if r.begin > cursor {
                return Err(StoreError::Gap { offset: cursor });
            }
            continue;
        }
        if r.begin < cursor {
            let prev = last_nonempty.expect("cursor > 0 implies a previous range");
            return Err(StoreError::Overlap {
                first: prev.name.clone(),
                second: meta.name.clone(),
            });
        }
        if r.begin > cursor {
            return Err(StoreError::Gap { offset: cursor });
        }
        cursor = r.end;
        last_nonempty = Some(meta);
    }

    if let Some(meta) = order.iter().filter(|m| m.byte_range.end > data_len).max_by_key(|m| m.byte_range.end) {
        return Err(StoreError::TruncatedData {
            tensor: meta.name.clone(),
            end: meta.byte_range.end,
            available: data_len,
        });
    }
    if cursor < data_len {
        return Err(StoreError::TrailingBytes {
            covered: cursor,
            extra: data_len - cursor,
        });
    }
    Ok(())
}

enum Backing {
    Mapped(Mmap),
    /// Files too short to carry a header are read directly (mapping an empty file fails).
    Owned(Vec<u8>),
}

impl Backing {
    fn bytes(&self) -> &[u8] {
        match self {
            Backing::Mapped(m) => m,
            Backing::Owned(v) => v,
        }
    }
}

/// A checkpoint opened through a read-only memory map. The header is
/// validated on open; tensors are decoded on demand.
pub struct MappedCheckpoint {
    path: PathBuf,
    backing: Backing,
    layout: Layout,
}

impl fmt::Debug for MappedCheckpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MappedCheckpoint")
            .field("path", &self.path)
            .field("tensors", &self.layout.metas.len())
            .finish()
    }
}

impl MappedCheckpoint {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
        let len = file.metadata().map_err(|e| StoreError::io(&path, e))?.len();
        let backing = if len < 8 {
            Backing::Owned(std::fs::read(&path).map_err(|e| StoreError::io(&path, e))?)
        } else {
            // SAFETY: the map is read-only and private to this value; callers
            // must not truncate the file while it is open.
            Backing::Mapped(unsafe { Mmap::map(&file) }.map_err(|e| StoreError::io(&path, e))?)
        };
        let layout = Layout::parse(backing.bytes())?;
        Ok(Self {
            path,
            backing,
            layout,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Tensor metas sorted by name, with byte ranges as recorded in the file.
    pub fn metas(&self) -> &[TensorMeta] {
        &self.layout.metas
    }

    pub fn meta(&self, name: &str) -> Option<&TensorMeta> {
        self.layout
            .metas
            .binary_search_by(|m| m.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.layout.metas[i])
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.layout.metadata
    }

    pub fn schema(&self) -> ModelSchema {
        ModelSchema::from_entries(self.layout.metas.iter().map(|m| SchemaEntry {
            name: m.name.clone(),
            dtype: m.dtype,
            shape: m.shape.clone(),
        }))
    }

    /// Raw little-endian bytes of one tensor.
    pub fn raw(&self, name: &str) -> Option<&[u8]> {
        self.meta(name).map(|m| self.layout.raw(self.backing.bytes(), m))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let meta = self.meta(name).ok_or_else(|| StoreError::InvalidTensor {
            name: name.to_string(),
            reason: "no such tensor".into(),
        })?;
        self.layout.decode(self.backing.bytes(), meta)
    }

    /// Raw data section, suitable for content hashing.
    pub fn data_section(&self) -> &[u8] {
        &self.backing.bytes()[self.layout.data_start..]
    }

    pub fn to_map(&self) -> Result<TensorMap> {
        self.layout.decode_all(self.backing.bytes())
    }
}

/// Streams tensors into a new container in canonical order. The header is
/// fixed up front from the declared metas; each `write_tensor` call must
/// supply the next tensor in that order.
pub struct CheckpointWriter {
    path: PathBuf,
    out: BufWriter<NamedTempFile>,
    metas: Vec<TensorMeta>,
    next: usize,
    scratch: Vec<u8>,
}

impl CheckpointWriter {
    /// `metas` must be sorted by name and laid out contiguously from offset 0
    /// (as returned by [`TensorMap::metas`]).
    pub fn create(
        path: impl AsRef<Path>,
        metas: Vec<TensorMeta>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cursor = 0u64;
        for (i, m) in metas.iter().enumerate() {
            validate_name(&m.name)?;
            if i > 0 && metas[i - 1].name >= m.name {
                return Err(StoreError::InvalidTensor {
                    name: m.name.clone(),
                    reason: "metas must be strictly sorted by name".into(),
                });
            }
            let len = (m.numel() * m.dtype.size()) as u64;
            if m.byte_range.begin != cursor || m.byte_range.len() != len {
                return Err(StoreError::InvalidTensor {
                    name: m.name.clone(),
                    reason: "metas must be laid out contiguously in canonical order".into(),
                });
            }
            cursor = m.byte_range.end;
        }

        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = NamedTempFile::new_in(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let mut out = BufWriter::with_capacity(1 << 16, tmp);
        let header = header_json(&metas, &metadata);
        out.write_all(&(header.len() as u64).to_le_bytes())
            .and_then(|_| out.write_all(header.as_bytes()))
            .map_err(|e| StoreError::io(&path, e))?;
        Ok(Self {
            path,
            out,
            metas,
            next: 0,
            scratch: Vec::new(),
        })
    }

    pub fn write_tensor(&mut self, name: &str, data: &TensorData) -> Result<()> {
        let meta = self.metas.get(self.next).ok_or_else(|| StoreError::InvalidTensor {
            name: name.to_string(),
            reason: "more tensors written than declared".into(),
        })?;
        if meta.name != name || meta.dtype != data.dtype() || meta.numel() != data.len() {
            return Err(StoreError::InvalidTensor {
                name: name.to_string(),
                reason: format!(
                    "expected '{}' ({} x {}), got {} x {}",
                    meta.name,
                    meta.dtype,
                    meta.numel(),
                    data.dtype(),
                    data.len()
                ),
            });
        }
        let scratch = &mut self.scratch;
        let out = &mut self.out;
        let mut flush = |scratch: &mut Vec<u8>| -> std::io::Result<()> {
            out.write_all(scratch)?;
            scratch.clear();
            Ok(())
        };
        let res = match data {
            TensorData::F16(v) => v.chunks(WRITE_CHUNK_ELEMS).try_for_each(|c| {
                c.iter().for_each(|x| scratch.extend_from_slice(&x.to_le_bytes()));
                flush(scratch)
            }),
            TensorData::F32(v) => v.chunks(WRITE_CHUNK_ELEMS).try_for_each(|c| {
                c.iter().for_each(|x| scratch.extend_from_slice(&x.to_le_bytes()));
                flush(scratch)
            }),
            TensorData::F64(v) => v.chunks(WRITE_CHUNK_ELEMS).try_for_each(|c| {
                c.iter().for_each(|x| scratch.extend_from_slice(&x.to_le_bytes()));
                flush(scratch)
            }),
        };
        res.map_err(|e| StoreError::io(&self.path, e))?;
        self.next += 1;
        Ok(())
    }

    /// Flushes and atomically moves the file into place.
    pub fn finish(self) -> Result<()> {
        if self.next != self.metas.len() {
            return Err(StoreError::InvalidTensor {
                name: self.metas[self.next].name.clone(),
                reason: "declared tensor was never written".into(),
            });
        }
        let path = self.path;
        let tmp = self.out.into_inner().map_err(|e| StoreError::io(&path, e.into_error()))?;
        tmp.as_file().sync_all().map_err(|e| StoreError::io(&path, e))?;
        tmp.persist(&path).map_err(|e| StoreError::io(&path, e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use half::f16;

    fn container(header: &str, data: &[u8]) -> Vec<u8> {
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(data);
        out
    }

    fn one_tensor() -> TensorMap {
        TensorMap::new()
            .with("w", Tensor::from_f32(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn single_tensor_bytes_are_exact() {
        let bytes = to_bytes(&one_tensor());
        let header = r#"{"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#;
        let mut data = 1.0f32.to_le_bytes().to_vec();
        data.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(bytes, container(header, &data));
        assert_eq!(from_bytes(&bytes).unwrap(), one_tensor());
    }

    #[test]
    fn empty_map_round_trips() {
        let bytes = to_bytes(&TensorMap::new());
        assert_eq!(bytes, container("{}", &[]));
        assert!(from_bytes(&bytes).unwrap().is_empty());
    }

    #[test]
    fn names_are_written_in_lexicographic_order() {
        let m = TensorMap::new()
            .with("b", Tensor::from_f32(vec![1], vec![1.0]).unwrap())
            .unwrap()
            .with("a", Tensor::from_f32(vec![1], vec![2.0]).unwrap())
            .unwrap();
        let header = header_json(&m.metas(), m.metadata());
        assert!(header.find("\"a\"").unwrap() < header.find("\"b\"").unwrap());
    }

    #[test]
    fn metadata_is_written_first() {
        let mut m = one_tensor();
        m.set_metadata("z", "1");
        m.set_metadata("a", "q\"uote");
        let header = header_json(&m.metas(), m.metadata());
        assert!(header.starts_with(r#"{"__metadata__":{"a":"q\"uote","z":"1"},"w":"#));
        assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn overlap_names_both_tensors() {
        let header = r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#;
        let err = from_bytes(&container(header, &[0u8; 12])).unwrap_err();
        match err {
            StoreError::Overlap { first, second } => assert_eq!((first.as_str(), second.as_str()), ("a", "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_data_names_tensor() {
        let header = r#"{"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#;
        let err = from_bytes(&container(header, &[0u8; 5])).unwrap_err();
        assert!(matches!(err, StoreError::TruncatedData { ref tensor, end: 8, available: 5 } if tensor == "w"));
    }

    #[test]
    fn truncated_header_detected() {
        assert!(matches!(from_bytes(&[1, 2, 3]), Err(StoreError::TruncatedHeader { .. })));
        let mut bytes = 100u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert!(matches!(from_bytes(&bytes), Err(StoreError::TruncatedHeader { needed: 108, .. })));
    }

    #[test]
    fn unknown_dtype_detected() {
        let header = r#"{"w":{"dtype":"BF16","shape":[2],"data_offsets":[0,4]}}"#;
        let err = from_bytes(&container(header, &[0u8; 4])).unwrap_err();
        assert!(matches!(err, StoreError::UnknownDtype { ref tensor, ref dtype } if tensor == "w" && dtype == "BF16"));
    }

    #[test]
    fn malformed_json_detected() {
        let err = from_bytes(&container("{\"w\":", &[])).unwrap_err();
        assert!(matches!(err, StoreError::MalformedHeader(_)));
        let err = from_bytes(&container("[1,2]", &[])).unwrap_err();
        assert!(matches!(err, StoreError::MalformedHeader(_)));
    }

    #[test]
    fn gap_trailing_and_size_mismatch_detected() {
        let header = r#"{"w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#;
        assert!(matches!(from_bytes(&container(header, &[0u8; 8])), Err(StoreError::Gap { offset: 0 })));
        let header = r#"{"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}}"#;
        assert!(matches!(
            from_bytes(&container(header, &[0u8; 6])),
            Err(StoreError::TrailingBytes { covered: 4, extra: 2 })
        ));
        let header = r#"{"w":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#;
        assert!(matches!(
            from_bytes(&container(header, &[0u8; 8])),
            Err(StoreError::SizeMismatch { expected: 12, actual: 8, .. })
        ));
    }

    #[test]
    fn duplicate_and_unknown_fields_detected() {
        let header = r#"{"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}}"#;
        assert!(matches!(from_bytes(&container(header, &[0u8; 4])), Err(StoreError::DuplicateTensor(_))));
        let header = r#"{"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4],"extra":1}}"#;
        assert!(matches!(from_bytes(&container(header, &[0u8; 4])), Err(StoreError::InvalidEntry { .. })));
    }

    #[test]
    fn padded_header_from_other_writers_is_accepted() {
        let header = "{\"w\":{\"dtype\":\"F32\",\"shape\":[1],\"data_offsets\":[0,4]}}   ";
        let m = from_bytes(&container(header, &7.0f32.to_le_bytes())).unwrap();
        assert_eq!(m.get("w").unwrap().to_f64_vec(), vec![7.0]);
    }

    #[test]
    fn zero_sized_tensors_carry_empty_ranges() {
        let m = TensorMap::new()
            .with("empty", Tensor::from_f32(vec![0, 4], vec![]).unwrap())
            .unwrap()
            .with("w", Tensor::from_f16(vec![1], vec![f16::from_f32(0.5)]).unwrap())
            .unwrap();
        let bytes = to_bytes(&m);
        assert!(from_bytes(&bytes).unwrap().bit_eq(&m));
    }

    #[test]
    fn file_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let m = one_tensor();
        let p1 = dir.path().join("a.safetensors");
        let p2 = dir.path().join("b.safetensors");
        write_checkpoint(&m, &p1).unwrap();
        write_checkpoint(&m, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(std::fs::read(&p1).unwrap(), to_bytes(&m));
        assert_eq!(read_checkpoint(&p1).unwrap(), m);
    }

    #[test]
    fn non_finite_write_needs_permission() {
        let dir = tempfile::tempdir().unwrap();
        let m = TensorMap::new()
            .with("w", Tensor::from_f32(vec![2], vec![1.0, f32::NAN]).unwrap())
            .unwrap();
        let p = dir.path().join("nan.safetensors");
        assert!(matches!(write_checkpoint(&m, &p), Err(StoreError::NonFinite { index: 1, .. })));
        write_checkpoint_with(&m, &p, WriteOptions { allow_non_finite: true }).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert!(back.bit_eq(&m));
        assert!(!back.is_finite());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_checkpoint("/definitely/not/here.safetensors").unwrap_err();
        assert_eq!(err.kind(), "io");
    }
}
