//! End-to-end runs of the adaptation pipeline on toy data.
//!
//! Per seed: pretrain on pooled source real + synthetic data, fine-tune copies
//! on source real and source synthetic data, take their difference as the task
//! vector, fine-tune on target synthetic data, then add the scaled vector and
//! score on target real data. Every model passes through [`TensorMap`] and the
//! vector arithmetic in `vector_ops`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{generate_toy_data, Condition, Dataset, Domain, Split, ToyDataSpec};
use super::error::{Result, ToyError};
use super::model::{evaluate_error, train, ToyModel, TrainConfig};
use super::stats::{mean, spearman, standard_error};
use crate::sweep::LambdaGrid;
use crate::tensor_store::{read_checkpoint, write_checkpoint, TensorMap};
use crate::vector_ops::{
    apply_ensemble, compute_task_vector, similarity_matrix, Provenance, SimilarityMatrix,
    TaskVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub data: ToyDataSpec,
    /// Pretraining settings; fine-tunes reuse them with `finetune_epochs`.
    pub train: TrainConfig,
    pub finetune_epochs: usize,
    pub lambda_grid: LambdaGrid,
    pub num_seeds: usize,
    /// When set, every model and task vector is written here and read back
    /// before use instead of being passed in memory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub persist_dir: Option<PathBuf>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            data: ToyDataSpec::default(),
            train: TrainConfig::default(),
            finetune_epochs: 10,
            lambda_grid: LambdaGrid::default(),
            num_seeds: 10,
            persist_dir: None,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.num_seeds == 0 {
            return Err(ToyError::InvalidConfig("num_seeds must be positive".into()));
        }
        if self.data.num_source_domains == 0 {
            return Err(ToyError::InvalidSpec("need at least one source domain".into()));
        }
        Ok(())
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.num_seeds as u64).map(|i| self.data.seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// One task vector from the pooled source domains.
    Single,
    /// One task vector per source domain, averaged.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Target-synthetic model on target-real evaluation data.
    pub baseline_error: f64,
    /// Adapted model error at each grid lambda.
    pub errors: Vec<f64>,
    pub best_lambda: f64,
    pub best_error: f64,
    /// `100 * (baseline - best) / baseline`, 0 when the baseline is 0.
    pub relative_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub mode: ProtocolMode,
    pub num_source_domains: usize,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<SeedOutcome>,
    /// Mean error across seeds at each grid lambda.
    pub mean_errors: Vec<f64>,
    /// Lambda minimizing `mean_errors` (ties toward the smaller lambda).
    pub best_lambda: f64,
    pub mean_baseline_error: f64,
    pub mean_best_error: f64,
    pub mean_relative_reduction: f64,
    pub stderr_relative_reduction: f64,
}

impl ProtocolReport {
    fn assemble(
        mode: ProtocolMode,
        num_source_domains: usize,
        grid: &[f64],
        seeds: Vec<SeedOutcome>,
    ) -> Self {
        let mean_errors: Vec<f64> = (0..grid.len())
            .map(|j| mean(&seeds.iter().map(|s| s.errors[j]).collect::<Vec<_>>()))
            .collect();
        let rel: Vec<f64> = seeds.iter().map(|s| s.relative_reduction).collect();
        let (best_lambda, _) = argmin(grid, &mean_errors);
        Self {
            mode,
            num_source_domains,
            lambda_grid: grid.to_vec(),
            mean_errors,
            best_lambda,
            mean_baseline_error: mean(&seeds.iter().map(|s| s.baseline_error).collect::<Vec<_>>()),
            mean_best_error: mean(&seeds.iter().map(|s| s.best_error).collect::<Vec<_>>()),
            mean_relative_reduction: mean(&rel),
            stderr_relative_reduction: standard_error(&rel),
            seeds,
        }
    }

    /// Long-format `seed,lambda,error` CSV.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["seed", "lambda", "error"]).expect("in-memory write");
        for s in &self.seeds {
            for (l, e) in self.lambda_grid.iter().zip(&s.errors) {
                w.write_record([s.seed.to_string(), l.to_string(), e.to_string()])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII")
    }
}

/// First index of the minimum; returns `(grid[i], values[i])`.
fn argmin(grid: &[f64], values: &[f64]) -> (f64, f64) {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    (grid[best], values[best])
}

fn relative_reduction(baseline: f64, best: f64) -> f64 {
    if baseline > 0.0 {
        100.0 * (baseline - best) / baseline
    } else {
        0.0
    }
}

const STAGE_PRETRAIN: u64 = 0;
const STAGE_SOURCE: u64 = 1;
const STAGE_TARGET: u64 = 2;

/// Everything one seed's pipeline needs.
struct Run<'a> {
    cfg: &'a ProtocolConfig,
    spec: ToyDataSpec,
    seed: u64,
    dir: Option<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ProtocolConfig, seed: u64, tag: &str) -> Result<Self> {
        let dir = match &cfg.persist_dir {
            Some(root) => {
                let d = root.join(format!("{tag}-seed-{seed}"));
                std::fs::create_dir_all(&d).map_err(|source| ToyError::Io {
                    path: d.clone(),
                    source,
                })?;
                Some(d)
            }
            None => None,
        };
        Ok(Self {
            cfg,
            spec: ToyDataSpec {
                seed,
                ..cfg.data.clone()
            },
            seed,
            dir,
        })
    }

    fn data(&self, domain: Domain, condition: Condition, split: Split) -> Result<Dataset> {
        generate_toy_data(&self.spec, domain, condition, split)
    }

    fn data_with_family(&self, family: u64, domain: Domain, split: Split) -> Result<Dataset> {
        let spec = ToyDataSpec {
            synthetic_family: family,
            ..self.spec.clone()
        };
        generate_toy_data(&spec, domain, Condition::Synthetic, split)
    }

    fn train_config(&self, stage: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            seed: self
                .cfg
                .train
                .seed
                .wrapping_add(self.seed.wrapping_mul(1_000))
                .wrapping_add(stage),
            ..self.cfg.train.clone()
        }
    }

    fn pretrain(&self, data: &Dataset) -> Result<ToyModel> {
        let init = ToyModel::zeros(self.spec.num_classes, self.spec.feature_dim);
        train(&init, data, &self.train_config(STAGE_PRETRAIN, self.cfg.train.epochs))
    }

    fn finetune(&self, init: &ToyModel, data: &Dataset, stage: u64) -> Result<ToyModel> {
        train(init, data, &self.train_config(stage, self.cfg.finetune_epochs))
    }

    /// The checkpoint form of `model`, optionally via a file on disk.
    fn checkpoint(&self, name: &str, model: &ToyModel) -> Result<TensorMap> {
        let map = model.to_tensor_map();
        match &self.dir {
            Some(dir) => {
                let path = dir.join(format!("{name}.safetensors"));
                write_checkpoint(&map, &path)?;
                Ok(read_checkpoint(&path)?)
            }
            None => Ok(map),
        }
    }

    fn task_vector(
        &self,
        name: &str,
        real: &ToyModel,
        syn: &ToyModel,
        provenance: Provenance,
    ) -> Result<TaskVector> {
        let real = self.checkpoint(&format!("{name}-real"), real)?;
        let syn = self.checkpoint(&format!("{name}-syn"), syn)?;
        let tau = compute_task_vector(&real, &syn, provenance)?;
        match &self.dir {
            Some(dir) => {
                let path = dir.join(format!("{name}-tau.safetensors"));
                tau.save(&path)?;
                Ok(TaskVector::load(&path)?)
            }
            None => Ok(tau),
        }
    }

    fn provenance(&self, domain: &str, family: u64) -> Provenance {
        Provenance {
            source_domain: Some(domain.to_string()),
            real_label: Some("real".into()),
            syn_label: Some(format!("synthetic-{family}")),
            created_from: None,
            constituents: Vec::new(),
        }
    }

    fn source_sets(&self, n: usize) -> Result<Vec<(Dataset, Dataset)>> {
        (0..n)
            .map(|d| {
                Ok((
                    self.data(Domain::Source(d), Condition::Real, Split::Train)?,
                    self.data(Domain::Source(d), Condition::Synthetic, Split::Train)?,
                ))
            })
            .collect()
    }

    fn pretrain_on(&self, sources: &[(Dataset, Dataset)]) -> Result<ToyModel> {
        let pooled: Vec<&Dataset> = sources.iter().flat_map(|(r, s)| [r, s]).collect();
        self.pretrain(&Dataset::concat(&pooled)?)
    }

    /// Task vectors: one pooled vector, or one per source domain.
    fn source_vectors(
        &self,
        base: &ToyModel,
        sources: &[(Dataset, Dataset)],
        mode: ProtocolMode,
    ) -> Result<Vec<TaskVector>> {
        let family = self.spec.synthetic_family;
        match mode {
            ProtocolMode::Single => {
                let reals: Vec<&Dataset> = sources.iter().map(|(r, _)| r).collect();
                let syns: Vec<&Dataset> = sources.iter().map(|(_, s)| s).collect();
                let real = self.finetune(base, &Dataset::concat(&reals)?, STAGE_SOURCE)?;
                let syn = self.finetune(base, &Dataset::concat(&syns)?, STAGE_SOURCE)?;
                Ok(vec![self.task_vector("pooled", &real, &syn, self.provenance("pooled", family))?])
            }
            ProtocolMode::Ensemble => sources
                .iter()
                .enumerate()
                .map(|(d, (r, s))| {
                    let real = self.finetune(base, r, STAGE_SOURCE)?;
                    let syn = self.finetune(base, s, STAGE_SOURCE)?;
                    let label = format!("source-{d}");
                    self.task_vector(&label, &real, &syn, self.provenance(&label, family))
                })
                .collect(),
        }
    }

    /// Target-synthetic model and target-real evaluation data.
    fn target(&self, base: &ToyModel) -> Result<(TensorMap, Dataset, f64)> {
        let syn = self.data(Domain::Target, Condition::Synthetic, Split::Train)?;
        let model = self.finetune(base, &syn, STAGE_TARGET)?;
        let eval = self.data(Domain::Target, Condition::Real, Split::Eval)?;
        let baseline = evaluate_error(&model, &eval)?;
        Ok((self.checkpoint("target-syn", &model)?, eval, baseline))
    }

    fn sweep(&self, target: &TensorMap, taus: &[TaskVector], eval: &Dataset) -> Result<Vec<f64>> {
        self.cfg
            .lambda_grid
            .values()
            .iter()
            .map(|&lambda| {
                let adapted = apply_ensemble(target, taus, lambda)?;
                evaluate_error(&ToyModel::from_tensor_map(&adapted)?, eval)
            })
            .collect()
    }

    fn outcome(&self, baseline: f64, errors: Vec<f64>) -> SeedOutcome {
        let (best_lambda, best_error) = argmin(self.cfg.lambda_grid.values(), &errors);
        SeedOutcome {
            seed: self.seed,
            baseline_error: baseline,
            errors,
            best_lambda,
            best_error,
            relative_reduction: relative_reduction(baseline, best_error),
        }
    }
}

fn run_protocol(cfg: &ProtocolConfig, mode: ProtocolMode) -> Result<ProtocolReport> {
    cfg.validate()?;
    let n = cfg.data.num_source_domains;
    let tag = match mode {
        ProtocolMode::Single => "single",
        ProtocolMode::Ensemble => "ensemble",
    };
    let seeds: Vec<SeedOutcome> = cfg
        .seeds()
        .par_iter()
        .map(|&seed| {
            let run = Run::new(cfg, seed, tag)?;
            let sources = run.source_sets(n)?;
            let base = run.pretrain_on(&sources)?;
            let taus = run.source_vectors(&base, &sources, mode)?;
            let (target, eval, baseline) = run.target(&base)?;
            let errors = run.sweep(&target, &taus, &eval)?;
            tracing::debug!(seed, baseline, "seed finished");
            Ok(run.outcome(baseline, errors))
        })
        .collect::<Result<_>>()?;
    Ok(ProtocolReport::assemble(mode, n, cfg.lambda_grid.values(), seeds))
}

/// The pipeline with one task vector from the pooled source domains.
pub fn run_syn2real_protocol(cfg: &ProtocolConfig) -> Result<ProtocolReport> {
    run_protocol(cfg, ProtocolMode::Single)
}

/// The pipeline with one task vector per source domain, averaged before application.
pub fn run_ensemble_protocol(cfg: &ProtocolConfig) -> Result<ProtocolReport> {
    run_protocol(cfg, ProtocolMode::Ensemble)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCurve {
    pub ks: Vec<usize>,
    /// Best-over-grid error per seed (outer) and k (inner).
    pub per_seed: Vec<Vec<f64>>,
    /// Mean across seeds of the best-over-grid error at each k.
    pub mean_best_error: Vec<f64>,
    /// Spearman correlation between k and `mean_best_error`; `None` if the curve is flat.
    pub spearman_rho: Option<f64>,
}

/// Error versus number of source domains: for each seed, pretrain once on all
/// `data.num_source_domains` domains, then apply ensembles of the first k
/// per-domain vectors for k = 1..=|S| and keep the best lambda for each k.
pub fn run_domain_curve(cfg: &ProtocolConfig) -> Result<DomainCurve> {
    cfg.validate()?;
    let n = cfg.data.num_source_domains;
    let per_seed: Vec<Vec<f64>> = cfg
        .seeds()
        .par_iter()
        .map(|&seed| {
            let run = Run::new(cfg, seed, "curve")?;
            let sources = run.source_sets(n)?;
            let base = run.pretrain_on(&sources)?;
            let taus = run.source_vectors(&base, &sources, ProtocolMode::Ensemble)?;
            let (target, eval, _) = run.target(&base)?;
            (1..=n)
                .map(|k| {
                    let errors = run.sweep(&target, &taus[..k], &eval)?;
                    Ok(errors.into_iter().fold(f64::INFINITY, f64::min))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ks: Vec<usize> = (1..=n).collect();
    let mean_best_error: Vec<f64> = (0..n)
        .map(|k| mean(&per_seed.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    Ok(DomainCurve {
        spearman_rho: spearman(&kf, &mean_best_error),
        ks,
        per_seed,
        mean_best_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityExperiment {
    /// `prefix + "d" + domain` per vector, family-major.
    pub labels: Vec<String>,
    pub families: Vec<u64>,
    /// Vectors of the first seed.
    pub vectors: Vec<TaskVector>,
    /// Cosine matrix of the first seed.
    pub matrix: SimilarityMatrix,
    /// `(mean intra-family, mean inter-family)` cosine per seed, off-diagonal only.
    pub per_seed: Vec<(f64, f64)>,
    pub mean_intra: f64,
    pub mean_inter: f64,
}

/// Per-domain task vectors under several synthetic families sharing one
/// pretrained parent (pretrained on source real data plus every family's
/// synthetic data).
pub fn run_similarity_experiment(
    cfg: &ProtocolConfig,
    families: &[(String, u64)],
) -> Result<SimilarityExperiment> {
    cfg.validate()?;
    if families.len() < 2 {
        return Err(ToyError::InvalidConfig("need at least two synthetic families".into()));
    }
    let n = cfg.data.num_source_domains;
    let runs: Vec<(Vec<String>, Vec<TaskVector>, SimilarityMatrix)> = cfg
        .seeds()
        .par_iter()
        .map(|&seed| {
            let run = Run::new(cfg, seed, "similarity")?;
            let reals: Vec<Dataset> = (0..n)
                .map(|d| run.data(Domain::Source(d), Condition::Real, Split::Train))
                .collect::<Result<_>>()?;
            let syns: Vec<Vec<Dataset>> = families
                .iter()
                .map(|(_, f)| {
                    (0..n)
                        .map(|d| run.data_with_family(*f, Domain::Source(d), Split::Train))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;
            let pooled: Vec<&Dataset> = reals.iter().chain(syns.iter().flatten()).collect();
            let base = run.pretrain(&Dataset::concat(&pooled)?)?;
            let real_models: Vec<ToyModel> = reals
                .iter()
                .map(|r| run.finetune(&base, r, STAGE_SOURCE))
                .collect::<Result<_>>()?;
            let mut labels = Vec::new();
            let mut vectors = Vec::new();
            for ((prefix, family), fam_syn) in families.iter().zip(&syns) {
                for (d, s) in fam_syn.iter().enumerate() {
                    let syn = run.finetune(&base, s, STAGE_SOURCE)?;
                    let label = format!("{prefix}d{d}");
                    vectors.push(run.task_vector(
                        &label,
                        &real_models[d],
                        &syn,
                        run.provenance(&format!("d{d}"), *family),
                    )?);
                    labels.push(label);
                }
            }
            let named: Vec<(String, &TaskVector)> =
                labels.iter().cloned().zip(vectors.iter()).collect();
            let matrix = similarity_matrix(&named)?;
            Ok((labels, vectors, matrix))
        })
        .collect::<Result<_>>()?;

    let fam_of: Vec<u64> = families
        .iter()
        .flat_map(|(_, f)| std::iter::repeat_n(*f, n))
        .collect();
    let per_seed: Vec<(f64, f64)> = runs
        .iter()
        .map(|(_, _, m)| intra_inter(m, &fam_of))
        .collect();
    let (labels, vectors, matrix) = runs.into_iter().next().expect("num_seeds > 0");
    Ok(SimilarityExperiment {
        labels,
        families: fam_of,
        vectors,
        matrix,
        mean_intra: mean(&per_seed.iter().map(|p| p.0).collect::<Vec<_>>()),
        mean_inter: mean(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>()),
        per_seed,
    })
}

/// Mean off-diagonal similarity within and across groups.
pub fn intra_inter<G: PartialEq>(m: &SimilarityMatrix, groups: &[G]) -> (f64, f64) {
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            if let Some(v) = m.get(i, j) {
                if groups[i] == groups[j] {
                    intra.push(v);
                } else {
                    inter.push(v);
                }
            }
        }
    }
    (mean(&intra), mean(&inter))
}

/// Reads a protocol config from JSON, filling unspecified fields with defaults.
pub fn load_protocol_config(path: &Path) -> Result<ProtocolConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ToyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ToyError::InvalidConfig(format!("{}: {e}", path.display())))
}
