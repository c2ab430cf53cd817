//! Softmax regression trained with minibatch SGD.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{stream, Dataset};
use super::error::{Result, ToyError};
use crate::tensor_store::{Tensor, TensorMap};

pub const WEIGHT: &str = "linear.weight";
pub const BIAS: &str = "linear.bias";

/// Linear classifier `logits = W x + b`, `W` row-major `[num_classes, feature_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            num_classes,
            feature_dim,
            weight: vec![0.0; num_classes * feature_dim],
            bias: vec![0.0; num_classes],
        }
    }

    /// F64 tensors `linear.weight` and `linear.bias`.
    pub fn to_tensor_map(&self) -> TensorMap {
        TensorMap::new()
            .with(
                WEIGHT,
                Tensor::from_f64(vec![self.num_classes, self.feature_dim], self.weight.clone())
                    .expect("weight shape matches"),
            )
            .expect("valid name")
            .with(
                BIAS,
                Tensor::from_f64(vec![self.num_classes], self.bias.clone()).expect("bias shape matches"),
            )
            .expect("valid name")
    }

    pub fn from_tensor_map(map: &TensorMap) -> Result<Self> {
        let get = |name: &str| {
            map.get(name)
                .ok_or_else(|| ToyError::ShapeMismatch(format!("missing tensor {name}")))
        };
        let (w, b) = (get(WEIGHT)?, get(BIAS)?);
        let &[c, d] = w.shape() else {
            return Err(ToyError::ShapeMismatch(format!("{WEIGHT} must be 2-d, got {:?}", w.shape())));
        };
        if b.shape() != [c] {
            return Err(ToyError::ShapeMismatch(format!("{BIAS} shape {:?}, expected [{c}]", b.shape())));
        }
        if map.len() != 2 {
            return Err(ToyError::ShapeMismatch(format!("expected 2 tensors, found {}", map.len())));
        }
        Ok(Self {
            num_classes: c,
            feature_dim: d,
            weight: w.to_f64_vec(),
            bias: b.to_f64_vec(),
        })
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.feature_dim != self.feature_dim {
            return Err(ToyError::ShapeMismatch(format!(
                "model expects {} features, data has {}",
                self.feature_dim, data.feature_dim
            )));
        }
        if let Some(&y) = data.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(ToyError::ShapeMismatch(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weight[c * self.feature_dim..(c + 1) * self.feature_dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Class with the largest logit; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.num_classes];
        self.logits_into(x, &mut z);
        argmax(&z)
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over `rows` plus `(l2 / 2) * ||W||^2`, and its
/// gradient (the bias is not penalized).
fn batch_loss_grad(model: &ToyModel, data: &Dataset, rows: &[usize], l2: f64) -> (f64, ToyModel) {
    let (c, d) = (model.num_classes, model.feature_dim);
    let mut grad = ToyModel::zeros(c, d);
    let mut z = vec![0.0; c];
    let mut loss = 0.0;
    let n = rows.len() as f64;
    for &i in rows {
        let x = data.row(i);
        let y = data.labels[i];
        model.logits_into(x, &mut z);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        loss += m + sum.ln() - z[y];
        for (k, &zk) in z.iter().enumerate() {
            let p = (zk - m).exp() / sum - if k == y { 1.0 } else { 0.0 };
            let g = p / n;
            grad.bias[k] += g;
            for (gw, xv) in grad.weight[k * d..(k + 1) * d].iter_mut().zip(x) {
                *gw += g * xv;
            }
        }
    }
    for (gw, w) in grad.weight.iter_mut().zip(&model.weight) {
        *gw += l2 * w;
    }
    let penalty = 0.5 * l2 * model.weight.iter().map(|w| w * w).sum::<f64>();
    (loss / n + penalty, grad)
}

/// Full-batch loss and gradient.
pub fn loss_and_grad(model: &ToyModel, data: &Dataset, l2_penalty: f64) -> Result<(f64, ToyModel)> {
    model.check(data)?;
    if data.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(batch_loss_grad(model, data, &rows, l2_penalty))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ToyError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ToyError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(ToyError::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

const TAG_SHUFFLE: u64 = 10;

/// Minibatch SGD from `init`. Rows are reshuffled each epoch with a generator
/// keyed by `(config.seed, epoch)`.
pub fn train(init: &ToyModel, data: &Dataset, config: &TrainConfig) -> Result<ToyModel> {
    config.validate()?;
    init.check(data)?;
    if data.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    let mut model = init.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let (loss, grad) = batch_loss_grad(&model, data, rows, config.l2_penalty);
            if !loss.is_finite() {
                return Err(ToyError::Divergence { epoch, batch });
            }
            for (w, g) in model.weight.iter_mut().zip(&grad.weight) {
                *w -= config.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= config.learning_rate * g;
            }
        }
    }
    Ok(model)
}

/// Fraction of rows whose argmax prediction differs from the label.
pub fn evaluate_error(model: &ToyModel, data: &Dataset) -> Result<f64> {
    model.check(data)?;
    if data.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    let wrong = (0..data.len())
        .filter(|&i| model.predict(data.row(i)) != data.labels[i])
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Dataset {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 10.0;
            f.extend([1.0 + t, 0.5 - t]);
            l.push(0);
            f.extend([-1.0 - t, -0.5 + t]);
            l.push(1);
        }
        Dataset::new(2, f, l).unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = separable();
        let init = ToyModel {
            num_classes: 2,
            feature_dim: 2,
            weight: vec![0.1, 0.2, 0.3, 0.4],
            bias: vec![0.5, 0.6],
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(train(&init, &data, &cfg).unwrap(), init);
    }

    #[test]
    fn separable_set_is_learned() {
        let data = separable();
        let init = ToyModel::zeros(2, 2);
        let m = train(&init, &data, &TrainConfig::default()).unwrap();
        assert_eq!(evaluate_error(&m, &data).unwrap(), 0.0);
        let (l0, _) = loss_and_grad(&init, &data, 1e-4).unwrap();
        let (l1, _) = loss_and_grad(&m, &data, 1e-4).unwrap();
        assert!(l1 <= l0);
    }

    #[test]
    fn ties_go_to_class_zero() {
        let m = ToyModel::zeros(10, 3);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]), 0);
        let data = Dataset::new(3, vec![0.0; 30], (0..10).collect()).unwrap();
        assert!((evaluate_error(&m, &data).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn one_hot_logits_give_zero_error() {
        let m = ToyModel {
            num_classes: 3,
            feature_dim: 3,
            weight: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            bias: vec![0.0; 3],
        };
        let data = Dataset::new(3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0, 1, 2]).unwrap();
        assert_eq!(evaluate_error(&m, &data).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_mismatched_data() {
        let m = ToyModel::zeros(2, 2);
        let empty = Dataset::new(2, vec![], vec![]).unwrap();
        assert!(matches!(evaluate_error(&m, &empty), Err(ToyError::EmptyDataset)));
        let wide = Dataset::new(3, vec![0.0; 3], vec![0]).unwrap();
        assert!(matches!(evaluate_error(&m, &wide), Err(ToyError::ShapeMismatch(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let data = Dataset::new(1, vec![1e200, -1e200], vec![0, 1]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e10,
            ..Default::default()
        };
        assert!(matches!(
            train(&ToyModel::zeros(2, 1), &data, &cfg),
            Err(ToyError::Divergence { .. })
        ));
    }

    #[test]
    fn tensor_map_round_trip() {
        let m = ToyModel {
            num_classes: 2,
            feature_dim: 3,
            weight: vec![1.0, -2.0, 3.5, 0.25, 0.0, -0.0],
            bias: vec![0.1, -0.1],
        };
        let back = ToyModel::from_tensor_map(&m.to_tensor_map()).unwrap();
        assert_eq!(back, m);
        assert!(back.weight[5].is_sign_negative());
    }
}
