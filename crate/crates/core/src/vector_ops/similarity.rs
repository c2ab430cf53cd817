use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::error::{Result, VectorError};
use super::task_vector::TaskVector;
use crate::tensor_store::{schema_compatible, TensorData, TensorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// All tensors flattened in lexicographic name order.
    #[default]
    Global,
    PerTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cosine {
    Global(f64),
    /// `None` where either side of a tensor has zero norm.
    PerTensor(BTreeMap<String, Option<f64>>),
}

impl Cosine {
    pub fn global(&self) -> Option<f64> {
        match self {
            Cosine::Global(v) => Some(*v),
            Cosine::PerTensor(_) => None,
        }
    }
}

/// Dot product and squared norms of one tensor pair, accumulated sequentially in f64.
fn dot_norms(a: &TensorData, b: &TensorData) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        let (x, y) = (a.get_f64(i), b.get_f64(i));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na, nb)
}

fn cosine_from(dot: f64, na: f64, nb: f64) -> f64 {
    let denom = match (na * nb).sqrt() {
        d if d.is_finite() && d > 0.0 => d,
        _ => na.sqrt() * nb.sqrt(),
    };
    (dot / denom).clamp(-1.0, 1.0)
}

/// Cosine similarity between two task vectors.
///
/// Per-tensor sums run sequentially in f64; tensor totals are combined in
/// lexicographic name order, so the result is deterministic regardless of
/// thread count.
pub fn cosine_similarity(a: &TaskVector, b: &TaskVector, granularity: Granularity) -> Result<Cosine> {
    let report = schema_compatible(&a.schema(), &b.schema());
    if !report.ok {
        return Err(VectorError::SchemaMismatch(report));
    }
    let names: Vec<&str> = a.deltas().names().collect();
    let parts: Vec<(f64, f64, f64)> = names
        .par_iter()
        .map(|&n| {
            dot_norms(
                a.deltas().get(n).expect("name from a").data(),
                b.deltas().get(n).expect("compatible").data(),
            )
        })
        .collect();

    match granularity {
        Granularity::Global => {
            let (dot, na, nb) = parts
                .iter()
                .fold((0.0, 0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
            if na == 0.0 {
                return Err(VectorError::ZeroNorm(label_or(a, "first vector")));
            }
            if nb == 0.0 {
                return Err(VectorError::ZeroNorm(label_or(b, "second vector")));
            }
            Ok(Cosine::Global(cosine_from(dot, na, nb)))
        }
        Granularity::PerTensor => Ok(Cosine::PerTensor(
            names
                .iter()
                .zip(&parts)
                .map(|(&n, &(dot, na, nb))| {
                    let v = (na > 0.0 && nb > 0.0).then(|| cosine_from(dot, na, nb));
                    (n.to_string(), v)
                })
                .collect(),
        )),
    }
}

fn label_or(v: &TaskVector, fallback: &str) -> String {
    v.label().map(str::to_string).unwrap_or_else(|| fallback.to_string())
}

/// Square cosine-similarity matrix over labeled vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    /// Row-major; `None` marks undefined entries (zero-norm tensors in per-tensor mode).
    pub values: Vec<Vec<Option<f64>>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

/// Global-granularity matrix: one entry per vector pair, computed once per
/// unordered pair and mirrored.
pub fn similarity_matrix(vectors: &[(String, &TaskVector)]) -> Result<SimilarityMatrix> {
    let n = vectors.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = cosine_similarity(vectors[i].1, vectors[j].1, Granularity::Global)?
                .global()
                .expect("global granularity");
            values[i][j] = Some(c);
            values[j][i] = Some(c);
        }
    }
    Ok(SimilarityMatrix {
        labels: vectors.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

/// One matrix per tensor name.
pub fn per_tensor_similarity(
    vectors: &[(String, &TaskVector)],
) -> Result<BTreeMap<String, SimilarityMatrix>> {
    let n = vectors.len();
    let labels: Vec<String> = vectors.iter().map(|(l, _)| l.clone()).collect();
    let mut out: BTreeMap<String, SimilarityMatrix> = BTreeMap::new();
    for i in 0..n {
        for j in i..n {
            let Cosine::PerTensor(map) =
                cosine_similarity(vectors[i].1, vectors[j].1, Granularity::PerTensor)?
            else {
                unreachable!("per-tensor granularity")
            };
            for (name, v) in map {
                let m = out.entry(name).or_insert_with(|| SimilarityMatrix {
                    labels: labels.clone(),
                    values: vec![vec![None; n]; n],
                });
                m.values[i][j] = v;
                m.values[j][i] = v;
            }
        }
    }
    Ok(out)
}

/// Magnitude statistics of one tensor (or of all tensors together).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TensorStats {
    pub numel: usize,
    pub l2_norm: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub per_tensor: BTreeMap<String, TensorStats>,
    pub global: TensorStats,
}

pub fn norm_stats(tau: &TaskVector) -> NormStats {
    map_norm_stats(tau.deltas())
}

/// Same statistics for any tensor map.
pub fn map_norm_stats(map: &TensorMap) -> NormStats {
    let names: Vec<&str> = map.names().collect();
    let sums: Vec<(usize, f64, f64, f64)> = names
        .par_iter()
        .map(|&n| {
            let data = map.get(n).expect("name from map").data();
            let (mut sq, mut abs, mut max) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..data.len() {
                let x = data.get_f64(i).abs();
                sq += x * x;
                abs += x;
                max = max.max(x);
            }
            (data.len(), sq, abs, max)
        })
        .collect();

    let stats = |numel: usize, sq: f64, abs: f64, max: f64| TensorStats {
        numel,
        l2_norm: sq.sqrt(),
        max_abs: max,
        mean_abs: if numel == 0 { 0.0 } else { abs / numel as f64 },
    };
    let mut total = (0usize, 0.0f64, 0.0f64, 0.0f64);
    let mut per_tensor = BTreeMap::new();
    for (&name, &(numel, sq, abs, max)) in names.iter().zip(&sums) {
        per_tensor.insert(name.to_string(), stats(numel, sq, abs, max));
        total = (total.0 + numel, total.1 + sq, total.2 + abs, total.3.max(max));
    }
    NormStats {
        per_tensor,
        global: stats(total.0, total.1, total.2, total.3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::Tensor;
    use crate::vector_ops::Provenance;

    fn tau(entries: &[(&str, &[f64])]) -> TaskVector {
        let mut m = TensorMap::new();
        for (name, v) in entries {
            m.insert(*name, Tensor::from_f64(vec![v.len()], v.to_vec()).unwrap()).unwrap();
        }
        TaskVector::from_deltas(m, Provenance::default()).unwrap()
    }

    #[test]
    fn self_and_antiparallel() {
        let t = tau(&[("a", &[0.3, -1.7, 2.2]), ("b", &[1e-3])]);
        let c = cosine_similarity(&t, &t, Granularity::Global).unwrap();
        assert_eq!(c.global(), Some(1.0));
        let neg = t.scaled(-1.0).unwrap();
        let c = cosine_similarity(&t, &neg, Granularity::Global).unwrap();
        assert_eq!(c.global(), Some(-1.0));
    }

    #[test]
    fn hand_computed_angle() {
        let a = tau(&[("w", &[1.0, 0.0])]);
        let b = tau(&[("w", &[1.0, 1.0])]);
        let c = cosine_similarity(&a, &b, Granularity::Global).unwrap().global().unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn zero_norm_global_is_error_per_tensor_is_undefined() {
        let a = tau(&[("w", &[1.0, 0.0]), ("z", &[0.0])]);
        let zero = tau(&[("w", &[0.0, 0.0]), ("z", &[0.0])]);
        assert!(matches!(
            cosine_similarity(&a, &zero, Granularity::Global),
            Err(VectorError::ZeroNorm(_))
        ));
        let Cosine::PerTensor(map) = cosine_similarity(&a, &a, Granularity::PerTensor).unwrap() else {
            panic!()
        };
        assert_eq!(map["w"], Some(1.0));
        assert_eq!(map["z"], None);
    }

    #[test]
    fn schema_mismatch_is_error() {
        let a = tau(&[("w", &[1.0])]);
        let b = tau(&[("v", &[1.0])]);
        assert!(matches!(
            cosine_similarity(&a, &b, Granularity::Global),
            Err(VectorError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let a = tau(&[("w", &[1.0, 2.0])]);
        let b = tau(&[("w", &[-1.0, 0.5])]);
        let m = similarity_matrix(&[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(1, 1), Some(1.0));
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn norm_stats_examples() {
        let zero = tau(&[("w", &[0.0, 0.0])]);
        let s = norm_stats(&zero);
        assert_eq!(s.global, TensorStats { numel: 2, ..Default::default() });

        let t = tau(&[("w", &[3.0, -4.0])]);
        let s = norm_stats(&t);
        assert_eq!(s.per_tensor["w"].l2_norm, 5.0);
        assert_eq!(s.per_tensor["w"].max_abs, 4.0);
        assert_eq!(s.per_tensor["w"].mean_abs, 3.5);

        let t = tau(&[("a", &[3.0]), ("b", &[4.0])]);
        assert_eq!(norm_stats(&t).global.l2_norm, 5.0);
    }

    #[test]
    fn empty_tensors_have_zero_stats() {
        let mut m = TensorMap::new();
        m.insert("e", Tensor::from_f32(vec![0], vec![]).unwrap()).unwrap();
        let s = map_norm_stats(&m);
        assert_eq!(s.per_tensor["e"].mean_abs, 0.0);
    }
}
