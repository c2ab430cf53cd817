use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{run_jobs, SweepConfig};
use super::error::{PointFailure, Result, SweepError};
use super::evaluator::{CommandEvaluator, Evaluator};
use super::lambda::{csv_string, csv_writer, evaluate_point};
use crate::tensor_store::TensorMap;
use crate::vector_ops::{check_applicable, TaskVector, VectorError};

/// How `k` of the available vectors are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SubsetPolicy {
    /// The first `k` vectors in the configured order.
    Prefix,
    /// `k` vectors sampled without replacement, once per seed.
    Random { seeds: Vec<u64> },
}

impl SubsetPolicy {
    /// Sorted indices of the subset of size `k` out of `n` for seed slot `j`.
    pub fn select(&self, n: usize, k: usize, j: usize) -> Vec<usize> {
        match self {
            SubsetPolicy::Prefix => (0..k).collect(),
            SubsetPolicy::Random { seeds } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seeds[j]);
                rng.set_stream(k as u64);
                let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                idx
            }
        }
    }

    fn runs(&self) -> usize {
        match self {
            SubsetPolicy::Prefix => 1,
            SubsetPolicy::Random { seeds } => seeds.len(),
        }
    }

    fn seed(&self, j: usize) -> Option<u64> {
        match self {
            SubsetPolicy::Prefix => None,
            SubsetPolicy::Random { seeds } => Some(seeds[j]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub k: usize,
    /// Mean over the successful runs in `per_seed`.
    pub mean_wer: f64,
    pub per_seed: Vec<f64>,
    /// Indices (into the configured vector list) used by each run in `per_seed`.
    pub subsets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub lambda: f64,
    pub subset_policy: SubsetPolicy,
    /// Strictly increasing in `k`; a `k` whose runs all failed is omitted.
    pub points: Vec<AblationPoint>,
    pub failures: Vec<PointFailure>,
}

impl AblationResult {
    /// `k,mean_wer,seed_values` CSV; seed values are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["k", "mean_wer", "seed_values"]).expect("in-memory write");
        for p in &self.points {
            let seeds: Vec<String> = p.per_seed.iter().map(f64::to_string).collect();
            w.write_record([p.k.to_string(), p.mean_wer.to_string(), seeds.join(";")])
                .expect("in-memory write");
        }
        csv_string(w)
    }
}

/// Which ks to evaluate; `None` means every k in `1..=|S|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub lambda: f64,
    pub policy: SubsetPolicy,
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
}

impl AblationPlan {
    fn ks(&self, n: usize) -> Result<Vec<usize>> {
        let ks = self.ks.clone().unwrap_or_else(|| (1..=n).collect());
        if ks.is_empty() {
            return Err(SweepError::InvalidConfig("no domain counts to evaluate".into()));
        }
        if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
            return Err(SweepError::InvalidConfig(format!("k = {k} outside 1..={n}")));
        }
        if ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SweepError::InvalidConfig("ks must be strictly increasing".into()));
        }
        Ok(ks)
    }
}

pub fn run_domain_ablation(
    model: &TensorMap,
    vectors: &[TaskVector],
    plan: &AblationPlan,
    config: &SweepConfig,
) -> Result<AblationResult> {
    let evaluator = CommandEvaluator::new(
        config.evaluator.clone(),
        super::evaluator::timeout_from_env()?,
    )?;
    run_domain_ablation_with(model, vectors, plan, config, &evaluator)
}

/// Evaluates `model + lambda * mean(subset)` for subsets of each size k.
///
/// Run `(k, j)` uses directory `workdir/k-KKK-run-JJJ/`. `config.lambda_grid`
/// is ignored; the plan's single lambda applies to every run.
pub fn run_domain_ablation_with(
    model: &TensorMap,
    vectors: &[TaskVector],
    plan: &AblationPlan,
    config: &SweepConfig,
    evaluator: &dyn Evaluator,
) -> Result<AblationResult> {
    if !plan.lambda.is_finite() {
        return Err(VectorError::NonFiniteLambda(plan.lambda).into());
    }
    if config.parallel_workers == 0 {
        return Err(SweepError::InvalidConfig("parallel_workers must be positive".into()));
    }
    if plan.policy.runs() == 0 {
        return Err(SweepError::InvalidConfig("random policy needs at least one seed".into()));
    }
    check_applicable(model, vectors)?;
    let n = vectors.len();
    let ks = plan.ks(n)?;
    std::fs::create_dir_all(&config.workdir).map_err(|e| SweepError::io(&config.workdir, e))?;

    let jobs: Vec<(usize, usize, Vec<usize>)> = ks
        .iter()
        .flat_map(|&k| (0..plan.policy.runs()).map(move |j| (k, j)))
        .map(|(k, j)| (k, j, plan.policy.select(n, k, j)))
        .collect();
    let outcomes = run_jobs(&jobs, config.parallel_workers, |(k, j, subset)| {
        let chosen: Vec<TaskVector> = subset.iter().map(|&i| vectors[i].clone()).collect();
        let dir = config.workdir.join(format!("k-{k:03}-run-{j:03}"));
        evaluate_point(model, &chosen, plan.lambda, &dir, config.keep_checkpoints, evaluator)
    });

    let mut points: Vec<AblationPoint> = Vec::new();
    let mut failures = Vec::new();
    for ((k, j, subset), out) in jobs.into_iter().zip(outcomes) {
        match out {
            Ok(o) => {
                if points.last().is_none_or(|p| p.k != k) {
                    points.push(AblationPoint {
                        k,
                        mean_wer: 0.0,
                        per_seed: Vec::new(),
                        subsets: Vec::new(),
                    });
                }
                let p = points.last_mut().expect("just pushed");
                p.per_seed.push(o.wer);
                p.subsets.push(subset);
            }
            Err((kind, message)) => failures.push(PointFailure {
                lambda: plan.lambda,
                k: Some(k),
                seed: plan.policy.seed(j),
                kind,
                message,
            }),
        }
    }
    if points.is_empty() {
        return Err(SweepError::AllPointsFailed(failures));
    }
    for p in &mut points {
        p.mean_wer = p.per_seed.iter().sum::<f64>() / p.per_seed.len() as f64;
    }
    Ok(AblationResult {
        lambda: plan.lambda,
        subset_policy: plan.policy.clone(),
        points,
        failures,
    })
}
