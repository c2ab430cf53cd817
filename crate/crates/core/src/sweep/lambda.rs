use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{run_jobs, SweepConfig};
use super::error::{FailureKind, PointFailure, Result, SweepError};
use super::evaluator::{CommandEvaluator, EvalRequest, Evaluator};
use crate::tensor_store::{write_checkpoint, TensorMap};
use crate::vector_ops::{apply_ensemble, check_applicable, TaskVector};

pub(crate) const CHECKPOINT_FILE: &str = "model.safetensors";

/// One successful grid-point evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub lambda: f64,
    pub wer: f64,
    pub checkpoint_path: PathBuf,
    pub evaluator_stdout: String,
    /// Seconds spent building the checkpoint and running the evaluator.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Successful records in ascending lambda order.
    pub records: Vec<EvalRecord>,
    /// Grid points that produced no record.
    pub failures: Vec<PointFailure>,
    pub best_lambda: f64,
    pub best_wer: f64,
}

impl SweepResult {
    /// Zeroes wall times so two runs of a deterministic evaluator serialize identically.
    pub fn without_timing(mut self) -> Self {
        for r in &mut self.records {
            r.wall_time = 0.0;
        }
        self
    }

    /// The curve as `lambda,wer` CSV.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["lambda", "wer"]).expect("in-memory write");
        for r in &self.records {
            w.write_record([r.lambda.to_string(), r.wer.to_string()])
                .expect("in-memory write");
        }
        csv_string(w)
    }

    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.lambda, r.wer)).collect()
    }
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub(crate) fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields")
}

/// Lambda of minimum WER; ties go to the smaller lambda.
pub fn best_lambda(records: &[EvalRecord]) -> Result<f64> {
    best(records).map(|(l, _)| l)
}

fn best(records: &[EvalRecord]) -> Result<(f64, f64)> {
    records
        .iter()
        .map(|r| (r.lambda, r.wer))
        .reduce(|a, b| {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .ok_or(SweepError::NoSuccessfulRecords)
}

pub(crate) struct PointOutcome {
    pub wer: f64,
    pub checkpoint: PathBuf,
    pub stdout: String,
    pub wall_time: f64,
}

/// Materializes `model + lambda * mean(vectors)` under `dir` and scores it.
pub(crate) fn evaluate_point(
    model: &TensorMap,
    vectors: &[TaskVector],
    lambda: f64,
    dir: &Path,
    keep_checkpoint: bool,
    evaluator: &dyn Evaluator,
) -> std::result::Result<PointOutcome, (FailureKind, String)> {
    let start = Instant::now();
    let adapted =
        apply_ensemble(model, vectors, lambda).map_err(|e| (FailureKind::Apply, e.to_string()))?;
    std::fs::create_dir_all(dir)
        .map_err(|e| (FailureKind::Io, format!("creating {}: {e}", dir.display())))?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    write_checkpoint(&adapted, &checkpoint).map_err(|e| (FailureKind::Io, e.to_string()))?;
    drop(adapted);

    let result = evaluator.evaluate(&EvalRequest {
        checkpoint: &checkpoint,
        lambda,
        workdir: dir,
    });
    if !keep_checkpoint {
        if let Err(e) = std::fs::remove_file(&checkpoint) {
            tracing::warn!(path = %checkpoint.display(), error = %e, "could not remove checkpoint");
        }
    }
    let out = result.map_err(|e| (e.kind(), e.to_string()))?;
    Ok(PointOutcome {
        wer: out.wer,
        checkpoint,
        stdout: out.stdout,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Sweeps `config.lambda_grid` using the command evaluator from `config.evaluator`.
pub fn run_lambda_sweep(
    model: &TensorMap,
    vectors: &[TaskVector],
    config: &SweepConfig,
) -> Result<SweepResult> {
    let evaluator = CommandEvaluator::new(
        config.evaluator.clone(),
        super::evaluator::timeout_from_env()?,
    )?;
    run_lambda_sweep_with(model, vectors, config, &evaluator)
}

/// Sweeps `config.lambda_grid` with any evaluator.
///
/// Each grid point gets its own directory `workdir/lambda-NNN/`. Failures at
/// individual points are collected in `failures`; the sweep itself fails only
/// when no point succeeds.
pub fn run_lambda_sweep_with(
    model: &TensorMap,
    vectors: &[TaskVector],
    config: &SweepConfig,
    evaluator: &dyn Evaluator,
) -> Result<SweepResult> {
    config.validate()?;
    check_applicable(model, vectors)?;
    std::fs::create_dir_all(&config.workdir).map_err(|e| SweepError::io(&config.workdir, e))?;

    let jobs: Vec<(usize, f64)> = config.lambda_grid.values().iter().copied().enumerate().collect();
    let outcomes = run_jobs(&jobs, config.parallel_workers, |&(idx, lambda)| {
        let dir = config.workdir.join(format!("lambda-{idx:03}"));
        let out = evaluate_point(model, vectors, lambda, &dir, config.keep_checkpoints, evaluator);
        match &out {
            Ok(o) => tracing::info!(lambda, wer = o.wer, "grid point done"),
            Err((kind, msg)) => tracing::warn!(lambda, ?kind, msg, "grid point failed"),
        }
        out
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(_, lambda), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(o) => records.push(EvalRecord {
                lambda,
                wer: o.wer,
                checkpoint_path: o.checkpoint,
                evaluator_stdout: o.stdout,
                wall_time: o.wall_time,
            }),
            Err((kind, message)) => failures.push(PointFailure {
                lambda,
                k: None,
                seed: None,
                kind,
                message,
            }),
        }
    }
    if records.is_empty() {
        return Err(SweepError::AllPointsFailed(failures));
    }
    let (best_lambda, best_wer) = best(&records)?;
    Ok(SweepResult {
        records,
        failures,
        best_lambda,
        best_wer,
    })
}
