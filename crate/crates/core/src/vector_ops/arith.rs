//! Delta computation and scaled application.
//!
//! Element kernels widen to f64, combine, and narrow once to the output
//! dtype. Ensemble sums sort the per-element contributions before adding so
//! the result does not depend on the order the vectors were supplied in.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::error::{Result, VectorError};
use super::task_vector::{check_header, Provenance, TaskVector};
use crate::tensor_store::{
    schema_compatible, schema_of, CheckpointWriter, DType, Digest256, MappedCheckpoint,
    ModelSchema, Tensor, TensorData, TensorMap, TensorMeta, ByteRange,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct ApplyOptions {
    /// Pass NaN/inf model values through instead of failing.
    pub allow_non_finite: bool,
}

fn require_compatible(a: &ModelSchema, b: &ModelSchema) -> Result<()> {
    let report = schema_compatible(a, b);
    if report.ok {
        Ok(())
    } else {
        Err(VectorError::SchemaMismatch(report))
    }
}

fn require_finite(map: &TensorMap) -> Result<()> {
    match map.first_non_finite() {
        Some((tensor, index)) => Err(VectorError::NonFiniteInput {
            tensor: tensor.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// `real - syn` for every tensor, in the compute dtype of the parents.
pub fn compute_task_vector(
    real: &TensorMap,
    syn: &TensorMap,
    provenance: Provenance,
) -> Result<TaskVector> {
    require_compatible(&schema_of(real).widened(), &schema_of(syn).widened())?;
    require_finite(real)?;
    require_finite(syn)?;

    let names: Vec<&str> = real.names().collect();
    let tensors: Vec<Result<(String, Tensor)>> = names
        .par_iter()
        .map(|&name| {
            let a = real.get(name).expect("name from real");
            let b = syn.get(name).expect("schemas are compatible");
            let data = match a.dtype().compute() {
                DType::F32 => TensorData::F32(
                    (0..a.numel())
                        .map(|i| a.data().get_f64(i) as f32 - b.data().get_f64(i) as f32)
                        .collect(),
                ),
                _ => TensorData::F64(
                    (0..a.numel())
                        .map(|i| a.data().get_f64(i) - b.data().get_f64(i))
                        .collect(),
                ),
            };
            if let Some(index) = data.first_non_finite() {
                return Err(VectorError::NonFiniteResult {
                    tensor: name.to_string(),
                    index,
                });
            }
            Ok((name.to_string(), Tensor::new(a.shape().to_vec(), data)?))
        })
        .collect();

    let mut deltas = TensorMap::new();
    for t in tensors {
        let (name, tensor) = t?;
        deltas.insert(name, tensor)?;
    }
    TaskVector::from_deltas(deltas, provenance)
}

/// `model + lambda * tau`, in the model's dtype.
pub fn apply_task_vector(model: &TensorMap, tau: &TaskVector, lambda: f64) -> Result<TensorMap> {
    apply_task_vector_with(model, tau, lambda, ApplyOptions::default())
}

pub fn apply_task_vector_with(
    model: &TensorMap,
    tau: &TaskVector,
    lambda: f64,
    opts: ApplyOptions,
) -> Result<TensorMap> {
    apply_scaled_sum(model, &[tau], lambda, opts)
}

/// Elementwise mean of `vectors`; all must share one base schema.
pub fn ensemble_average(vectors: &[TaskVector]) -> Result<TaskVector> {
    let refs: Vec<&TaskVector> = vectors.iter().collect();
    let base = require_same_base(&refs)?;
    let first = refs[0];
    let k = refs.len() as f64;

    let names: Vec<&str> = first.deltas().names().collect();
    let tensors: Vec<Result<(String, Tensor)>> = names
        .par_iter()
        .map(|&name| {
            let parts: Vec<&TensorData> = refs
                .iter()
                .map(|v| v.deltas().get(name).expect("same base schema").data())
                .collect();
            let template = first.deltas().get(name).expect("name from first");
            let mut scratch = Vec::with_capacity(parts.len());
            let data = TensorData::from_f64(
                template.dtype(),
                (0..template.numel()).map(|i| sorted_sum(&parts, i, &mut scratch) / k),
            );
            Ok((name.to_string(), Tensor::new(template.shape().to_vec(), data)?))
        })
        .collect();

    let mut deltas = TensorMap::new();
    for t in tensors {
        let (name, tensor) = t?;
        deltas.insert(name, tensor)?;
    }
    let avg = TaskVector::from_deltas(deltas, merged_provenance(&refs))?;
    debug_assert_eq!(avg.base_schema().schema_hash, base);
    Ok(avg)
}

/// `model + (lambda / |S|) * sum(tau_i)`.
pub fn apply_ensemble(model: &TensorMap, vectors: &[TaskVector], lambda: f64) -> Result<TensorMap> {
    apply_ensemble_with(model, vectors, lambda, ApplyOptions::default())
}

pub fn apply_ensemble_with(
    model: &TensorMap,
    vectors: &[TaskVector],
    lambda: f64,
    opts: ApplyOptions,
) -> Result<TensorMap> {
    let refs: Vec<&TaskVector> = vectors.iter().collect();
    apply_scaled_sum(model, &refs, lambda, opts)
}

/// Checks that `vectors` can be applied to `model` without doing the arithmetic.
pub fn check_applicable(model: &TensorMap, vectors: &[TaskVector]) -> Result<()> {
    let refs: Vec<&TaskVector> = vectors.iter().collect();
    require_same_base(&refs)?;
    require_compatible(&schema_of(model).widened(), &refs[0].schema())?;
    require_finite(model)
}

fn require_same_base(vectors: &[&TaskVector]) -> Result<Digest256> {
    let first = vectors.first().ok_or(VectorError::EmptyEnsemble)?;
    let expected = first.base_schema().schema_hash;
    for (index, v) in vectors.iter().enumerate().skip(1) {
        let found = v.base_schema().schema_hash;
        if found != expected {
            return Err(VectorError::FingerprintMismatch {
                index,
                expected,
                found,
            });
        }
    }
    Ok(expected)
}

fn merged_provenance(vectors: &[&TaskVector]) -> Provenance {
    let common = |f: fn(&Provenance) -> &Option<String>| {
        let first = f(vectors[0].provenance());
        vectors
            .iter()
            .all(|v| f(v.provenance()) == first)
            .then(|| first.clone())
            .flatten()
    };
    let constituents: Vec<String> = vectors
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            let p = v.provenance();
            if !p.constituents.is_empty() {
                p.constituents.clone()
            } else {
                vec![p.source_domain.clone().unwrap_or_else(|| format!("#{i}"))]
            }
        })
        .collect();
    Provenance {
        source_domain: (vectors.len() > 1)
            .then(|| constituents.join("+"))
            .or_else(|| vectors[0].provenance().source_domain.clone()),
        real_label: common(|p| &p.real_label),
        syn_label: common(|p| &p.syn_label),
        created_from: None,
        constituents: if vectors.len() > 1 { constituents } else { Vec::new() },
    }
}

/// Sum of element `i` across `parts`, added in ascending value order.
#[inline]
fn sorted_sum(parts: &[&TensorData], i: usize, scratch: &mut Vec<f64>) -> f64 {
    match parts {
        [a] => a.get_f64(i),
        [a, b] => a.get_f64(i) + b.get_f64(i),
        _ => {
            scratch.clear();
            scratch.extend(parts.iter().map(|p| p.get_f64(i)));
            scratch.sort_unstable_by(f64::total_cmp);
            scratch.iter().sum()
        }
    }
}

fn apply_scaled_sum(
    model: &TensorMap,
    vectors: &[&TaskVector],
    lambda: f64,
    opts: ApplyOptions,
) -> Result<TensorMap> {
    if !lambda.is_finite() {
        return Err(VectorError::NonFiniteLambda(lambda));
    }
    require_same_base(vectors)?;
    require_compatible(&schema_of(model).widened(), &vectors[0].schema())?;
    if !opts.allow_non_finite {
        require_finite(model)?;
    }
    let scale = lambda / vectors.len() as f64;

    let names: Vec<&str> = model.names().collect();
    let tensors: Vec<Result<(String, Tensor)>> = names
        .par_iter()
        .map(|&name| {
            let base = model.get(name).expect("name from model");
            let parts: Vec<&TensorData> = vectors
                .iter()
                .map(|v| v.deltas().get(name).expect("schemas are compatible").data())
                .collect();
            let data = apply_tensor(name, base.data(), &parts, scale, opts)?;
            Ok((name.to_string(), Tensor::new(base.shape().to_vec(), data)?))
        })
        .collect();

    let mut out = TensorMap::new();
    for t in tensors {
        let (name, tensor) = t?;
        out.insert(name, tensor)?;
    }
    *out.metadata_mut() = model.metadata().clone();
    Ok(out)
}

/// Element kernel shared by the in-memory and streaming paths.
///
/// A zero step leaves the model value untouched bit for bit, so `lambda = 0`
/// reproduces the model exactly (including signed zeros).
fn apply_tensor(
    name: &str,
    base: &TensorData,
    parts: &[&TensorData],
    scale: f64,
    opts: ApplyOptions,
) -> Result<TensorData> {
    let mut scratch = Vec::with_capacity(parts.len());
    let mut step = |i: usize| scale * sorted_sum(parts, i, &mut scratch);
    let out = match base {
        TensorData::F16(v) => TensorData::F16(
            v.iter()
                .enumerate()
                .map(|(i, &x)| match step(i) {
                    0.0 => x,
                    s => half::f16::from_f64(x.to_f64() + s),
                })
                .collect(),
        ),
        TensorData::F32(v) => TensorData::F32(
            v.iter()
                .enumerate()
                .map(|(i, &x)| match step(i) {
                    0.0 => x,
                    s => (x as f64 + s) as f32,
                })
                .collect(),
        ),
        TensorData::F64(v) => TensorData::F64(
            v.iter()
                .enumerate()
                .map(|(i, &x)| match step(i) {
                    0.0 => x,
                    s => x + s,
                })
                .collect(),
        ),
    };
    if out.first_non_finite().is_some() {
        // Permissive mode only tolerates non-finite values already in the model.
        let offending = (0..out.len()).find(|&i| {
            !out.get_f64(i).is_finite() && (!opts.allow_non_finite || base.get_f64(i).is_finite())
        });
        if let Some(index) = offending {
            return Err(VectorError::NonFiniteResult {
                tensor: name.to_string(),
                index,
            });
        }
    }
    Ok(out)
}

/// Summary of a file-to-file application.
#[derive(Debug, Clone, Serialize)]
pub struct ApplySummary {
    pub tensors: usize,
    pub model_schema: Digest256,
    pub task_vector_schemas: Vec<Digest256>,
    pub output_schema: Digest256,
}

/// Streams `model + (lambda / |S|) * sum(tau_i)` from files to a file, one
/// tensor at a time. Peak memory is a few copies of the largest tensor.
pub fn apply_files(
    model_path: &Path,
    tau_paths: &[&Path],
    lambda: f64,
    out_path: &Path,
    opts: ApplyOptions,
) -> Result<ApplySummary> {
    if !lambda.is_finite() {
        return Err(VectorError::NonFiniteLambda(lambda));
    }
    if tau_paths.is_empty() {
        return Err(VectorError::EmptyEnsemble);
    }
    let model = MappedCheckpoint::open(model_path)?;
    let taus: Vec<MappedCheckpoint> = tau_paths
        .iter()
        .map(MappedCheckpoint::open)
        .collect::<std::result::Result<_, _>>()?;

    let mut tau_hashes = Vec::with_capacity(taus.len());
    for (index, tau) in taus.iter().enumerate() {
        let hash = check_header(tau.metadata(), &tau.schema())?;
        if let Some(&expected) = tau_hashes.first() {
            if hash != expected {
                return Err(VectorError::FingerprintMismatch {
                    index,
                    expected,
                    found: hash,
                });
            }
        }
        tau_hashes.push(hash);
    }
    let model_schema = model.schema();
    require_compatible(&model_schema.widened(), &taus[0].schema())?;

    let mut offset = 0u64;
    let metas: Vec<TensorMeta> = model
        .metas()
        .iter()
        .map(|m| {
            let len = (m.numel() * m.dtype.size()) as u64;
            let meta = TensorMeta {
                byte_range: ByteRange {
                    begin: offset,
                    end: offset + len,
                },
                ..m.clone()
            };
            offset += len;
            meta
        })
        .collect();

    let scale = lambda / taus.len() as f64;
    let mut writer = CheckpointWriter::create(out_path, metas.clone(), model.metadata().clone())?;
    for meta in &metas {
        let base = model.tensor(&meta.name)?.into_data();
        if !opts.allow_non_finite {
            if let Some(index) = base.first_non_finite() {
                return Err(VectorError::NonFiniteInput {
                    tensor: meta.name.clone(),
                    index,
                });
            }
        }
        let deltas: Vec<TensorData> = taus
            .iter()
            .map(|t| t.tensor(&meta.name).map(Tensor::into_data))
            .collect::<std::result::Result<_, _>>()?;
        let parts: Vec<&TensorData> = deltas.iter().collect();
        let out = apply_tensor(&meta.name, &base, &parts, scale, opts)?;
        writer.write_tensor(&meta.name, &out)?;
    }
    writer.finish()?;

    Ok(ApplySummary {
        tensors: metas.len(),
        model_schema: model_schema.hash(),
        task_vector_schemas: tau_hashes,
        output_schema: model_schema.hash(),
    })
}
