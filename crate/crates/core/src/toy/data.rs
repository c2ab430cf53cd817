//! Seeded Gaussian classification data with a domain gap and a condition gap.
//!
//! A clean sample of class `c` in domain `d` is `mu[c] + offset[d][c]`. The
//! real condition keeps the clean signal and adds extra noise; a synthetic
//! family applies a fixed channel `x -> s * x + b`. Both conditions of a
//! domain draw their noise from the same stream, so with a zero condition
//! gap the two datasets are equal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::error::{Result, ToyError};

/// Distinguishes the synthetic condition from the real one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionShift {
    /// Scale of the additive channel bias `b` of synthetic data.
    pub bias_scale: f64,
    /// Scale of the multiplicative channel deviation: `s = 1 + channel_scale * g`.
    pub channel_scale: f64,
    /// Extra noise stddev present only in real data.
    pub noise_std: f64,
}

impl ConditionShift {
    pub const NONE: Self = Self {
        bias_scale: 0.0,
        channel_scale: 0.0,
        noise_std: 0.0,
    };
}

impl Default for ConditionShift {
    fn default() -> Self {
        Self {
            bias_scale: 1.0,
            channel_scale: 0.5,
            noise_std: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDataSpec {
    /// Label space shared by every domain.
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_mean_scale: f64,
    pub condition_shift: ConditionShift,
    /// Noise stddev common to both conditions.
    pub base_noise_std: f64,
    pub domain_offset_scale: f64,
    pub num_source_domains: usize,
    /// Which synthetic channel to use; different families model different generators.
    pub synthetic_family: u64,
    pub samples_per_class: usize,
    pub eval_samples_per_class: usize,
    pub seed: u64,
}

impl Default for ToyDataSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            feature_dim: 32,
            class_mean_scale: 0.5,
            condition_shift: ConditionShift::default(),
            base_noise_std: 1.0,
            domain_offset_scale: 0.25,
            num_source_domains: 1,
            synthetic_family: 0,
            samples_per_class: 40,
            eval_samples_per_class: 100,
            seed: 0,
        }
    }
}

impl ToyDataSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ToyError::InvalidSpec(m.to_string()));
        if self.num_classes == 0 || self.feature_dim == 0 {
            return bad("num_classes and feature_dim must be positive");
        }
        if self.samples_per_class == 0 || self.eval_samples_per_class == 0 {
            return bad("samples per class must be positive");
        }
        let scales = [
            ("class_mean_scale", self.class_mean_scale),
            ("domain_offset_scale", self.domain_offset_scale),
            ("base_noise_std", self.base_noise_std),
            ("condition_shift.bias_scale", self.condition_shift.bias_scale),
            ("condition_shift.channel_scale", self.condition_shift.channel_scale),
            ("condition_shift.noise_std", self.condition_shift.noise_std),
        ];
        if let Some((name, v)) = scales.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(ToyError::InvalidSpec(format!("{name} must be finite and non-negative, got {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source(usize),
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

/// Row-major features with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(feature_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if feature_dim == 0 || features.len() != labels.len() * feature_dim {
            return Err(ToyError::ShapeMismatch(format!(
                "{} features for {} labels of dimension {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            feature_dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Rows of all parts in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Self> {
        let dim = parts.first().ok_or(ToyError::EmptyDataset)?.feature_dim;
        if parts.iter().any(|p| p.feature_dim != dim) {
            return Err(ToyError::ShapeMismatch("feature dims differ".into()));
        }
        Ok(Self {
            feature_dim: dim,
            features: parts.iter().flat_map(|p| p.features.iter().copied()).collect(),
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
        })
    }
}

const TAG_MEANS: u64 = 1;
const TAG_OFFSETS: u64 = 2;
const TAG_FAMILY: u64 = 3;
const TAG_NOISE: u64 = 4;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, parts...)`.
pub(crate) fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let id = parts
        .iter()
        .fold(0x9e37_79b9_7f4a_7c15u64, |h, &p| mix(h ^ p.wrapping_add(0x632b_e59b_d9b4_e019)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn domain_tag(domain: Domain) -> [u64; 2] {
    match domain {
        Domain::Source(i) => [0, i as u64],
        Domain::Target => [1, 0],
    }
}

/// Generates one labeled dataset; a pure function of its arguments.
pub fn generate_toy_data(
    spec: &ToyDataSpec,
    domain: Domain,
    condition: Condition,
    split: Split,
) -> Result<Dataset> {
    spec.validate()?;
    let (c, d) = (spec.num_classes, spec.feature_dim);
    let means = normals(&mut stream(spec.seed, &[TAG_MEANS]), c * d, spec.class_mean_scale);
    let [dk, di] = domain_tag(domain);
    let offsets = normals(
        &mut stream(spec.seed, &[TAG_OFFSETS, dk, di]),
        c * d,
        spec.domain_offset_scale,
    );
    let shift = spec.condition_shift;
    let mut fam = stream(spec.seed, &[TAG_FAMILY, spec.synthetic_family]);
    let channel: Vec<f64> = normals(&mut fam, d, 1.0)
        .into_iter()
        .map(|g| 1.0 + shift.channel_scale * g)
        .collect();
    let bias = normals(&mut fam, d, shift.bias_scale);

    let per_class = match split {
        Split::Train => spec.samples_per_class,
        Split::Eval => spec.eval_samples_per_class,
    };
    let split_tag = match split {
        Split::Train => 0,
        Split::Eval => 1,
    };
    let mut noise = stream(spec.seed, &[TAG_NOISE, dk, di, split_tag]);
    let mut features = Vec::with_capacity(c * per_class * d);
    let mut labels = Vec::with_capacity(c * per_class);
    for class in 0..c {
        for _ in 0..per_class {
            let z1 = normals(&mut noise, d, 1.0);
            let z2 = normals(&mut noise, d, 1.0);
            for j in 0..d {
                let clean = means[class * d + j] + offsets[class * d + j];
                let x = match condition {
                    Condition::Real => {
                        clean + spec.base_noise_std * z1[j] + shift.noise_std * z2[j]
                    }
                    Condition::Synthetic => {
                        channel[j] * clean + bias[j] + spec.base_noise_std * z1[j]
                    }
                };
                features.push(x);
            }
            labels.push(class);
        }
    }
    Dataset::new(d, features, labels)
}
