use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::error::{Result, SweepError};

/// Scaling factors to evaluate: non-empty, finite, unique and ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SweepError::InvalidGrid("grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SweepError::InvalidGrid(format!("{v} is not finite")));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            let why = if w[0] == w[1] { "duplicate value" } else { "not ascending" };
            return Err(SweepError::InvalidGrid(format!("{why} at {} -> {}", w[0], w[1])));
        }
        Ok(Self(values))
    }

    /// `start, start + step, ...` up to and including `stop`, with each value
    /// computed as `start + i * step` and rounded to 12 decimals so that
    /// `0.0..=1.0` step `0.1` yields exactly `0.3`, `0.7`, ...
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(SweepError::InvalidGrid(format!(
                "bad range {start}..={stop} step {step}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Self::new(
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LambdaGrid {
    /// 0.0, 0.1, ..., 1.0.
    fn default() -> Self {
        Self((0..=10).map(|i| i as f64 / 10.0).collect())
    }
}

impl<'de> Deserialize<'de> for LambdaGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Self::new(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub lambda_grid: LambdaGrid,
    /// Evaluator argv template with `{checkpoint}` / `{lambda}` placeholders.
    #[serde(default)]
    pub evaluator: Vec<String>,
    pub workdir: PathBuf,
    #[serde(default)]
    pub keep_checkpoints: bool,
    #[serde(default = "one")]
    pub parallel_workers: usize,
}

fn one() -> usize {
    1
}

impl SweepConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self {
            lambda_grid: LambdaGrid::default(),
            evaluator: Vec::new(),
            workdir: workdir.into(),
            keep_checkpoints: false,
            parallel_workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallel_workers == 0 {
            return Err(SweepError::InvalidConfig("parallel_workers must be positive".into()));
        }
        LambdaGrid::new(self.lambda_grid.values().to_vec())?;
        Ok(())
    }
}

/// Runs `f` over `jobs` on up to `workers` threads and returns results in job order.
pub(crate) fn run_jobs<T: Sync, R: Send>(
    jobs: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = f(job);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
