#![allow(dead_code)]

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synvec::tensor_store::{DType, Tensor, TensorMap};
use synvec::toy::{loss_and_grad, Dataset, ToyModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random shape with at most `max_elems` elements; rank 0..=3, zero dims allowed.
pub fn random_shape(rng: &mut ChaCha8Rng, max_elems: usize) -> Vec<usize> {
    let rank = rng.random_range(0..=3);
    let mut shape = Vec::with_capacity(rank);
    let mut budget = max_elems.max(1);
    for _ in 0..rank {
        let d = rng.random_range(0..=budget.min(64));
        shape.push(d);
        budget = (budget / d.max(1)).max(1);
    }
    shape
}

/// Values spread over several orders of magnitude, both signs.
pub fn random_value(rng: &mut ChaCha8Rng) -> f64 {
    let mag = 10f64.powf(rng.random_range(-3.0..3.0));
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dtype: DType, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| random_value(rng)).collect();
    match dtype {
        DType::F16 => Tensor::from_f16(shape, values.iter().map(|&v| f16::from_f64(v)).collect()),
        DType::F32 => Tensor::from_f32(shape, values.iter().map(|&v| v as f32).collect()),
        DType::F64 => Tensor::from_f64(shape, values),
    }
    .unwrap()
}

/// Map with `n` tensors named `layer.NN.weight`, each with a random shape and dtype drawn from `dtypes`.
pub fn random_map(rng: &mut ChaCha8Rng, n: usize, max_elems: usize, dtypes: &[DType]) -> TensorMap {
    let mut map = TensorMap::new();
    for i in 0..n {
        let dtype = dtypes[rng.random_range(0..dtypes.len())];
        let shape = random_shape(rng, max_elems);
        map.insert(format!("layer.{i:02}.weight"), random_tensor(rng, dtype, shape))
            .unwrap();
    }
    map
}

/// A second map with the same schema and freshly drawn values.
pub fn like(rng: &mut ChaCha8Rng, map: &TensorMap) -> TensorMap {
    let mut out = TensorMap::new();
    for (name, t) in map.iter() {
        out.insert(name, random_tensor(rng, t.dtype(), t.shape().to_vec()))
            .unwrap();
    }
    out
}

/// Max abs difference between the analytic gradient and central finite
/// differences of the loss, for a random small model and dataset.
pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let classes = r.random_range(2..=5);
    let dim = r.random_range(1..=6);
    let n = r.random_range(1..=8);
    let mut model = ToyModel::zeros(classes, dim);
    model.weight.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
    model.bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
    let features: Vec<f64> = (0..n * dim).map(|_| r.random_range(-2.0..2.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
    let data = Dataset::new(dim, features, labels).unwrap();
    let l2 = r.random_range(0.0..0.1);

    let (_, grad) = loss_and_grad(&model, &data, l2).unwrap();
    let loss_at = |m: &ToyModel| loss_and_grad(m, &data, l2).unwrap().0;
    let h = 1e-6;
    let mut worst = 0f64;
    for i in 0..model.weight.len() {
        let (mut up, mut down) = (model.clone(), model.clone());
        up.weight[i] += h;
        down.weight[i] -= h;
        let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
        worst = worst.max((fd - grad.weight[i]).abs());
    }
    for i in 0..model.bias.len() {
        let (mut up, mut down) = (model.clone(), model.clone());
        up.bias[i] += h;
        down.bias[i] -= h;
        let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
        worst = worst.max((fd - grad.bias[i]).abs());
    }
    worst
}

/// Published per-domain WERs (baseline, adapted) and their printed relative reductions.
pub const DOMAINS: [&str; 18] = [
    "Alarm", "Audio", "Calendar", "Cooking", "Datetime", "Email", "General", "IOT", "Lists",
    "Music", "News", "Play", "QA", "Recommendation", "Social", "Takeaway", "Transport", "Weather",
];

pub const DOMAIN_BASELINE: [f64; 18] = [
    16.13, 14.69, 22.88, 14.26, 47.16, 16.23, 27.16, 13.67, 15.49, 23.51, 21.31, 21.61, 24.04,
    17.54, 29.57, 21.25, 18.91, 15.45,
];

pub const DOMAIN_ADAPTED: [f64; 18] = [
    15.65, 13.68, 22.64, 14.36, 40.29, 16.15, 16.87, 12.49, 15.22, 17.03, 21.25, 20.77, 23.88,
    15.19, 21.87, 18.03, 16.90, 20.38,
];

pub const DOMAIN_RELATIVE: [f64; 18] = [
    2.95, 6.87, 1.03, -0.70, 14.58, 0.50, 37.89, 8.58, 1.74, 27.57, 0.28, 3.88, 0.64, 13.42,
    26.04, 15.14, 10.65, -31.91,
];
