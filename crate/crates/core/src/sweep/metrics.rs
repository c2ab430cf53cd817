use std::collections::BTreeMap;

use serde::Serialize;

use super::error::{Result, SweepError};

/// Relative improvement in percent: `100 * (baseline - adapted) / baseline`.
/// Positive means the adapted model is better.
pub fn relative_wer(baseline: f64, adapted: f64) -> Result<f64> {
    if baseline.is_nan() || baseline <= 0.0 || !baseline.is_finite() {
        return Err(SweepError::NonPositiveBaseline(baseline));
    }
    Ok(100.0 * (baseline - adapted) / baseline)
}

/// Per-domain relative WERs plus both ways of averaging them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeTable {
    /// domain -> (baseline, adapted, relative %)
    pub rows: BTreeMap<String, (f64, f64, f64)>,
    pub mean_baseline: f64,
    pub mean_adapted: f64,
    /// Arithmetic mean of the per-domain relatives.
    pub mean_of_relatives: f64,
    /// Relative change between the mean baseline and mean adapted WER.
    pub relative_of_means: f64,
}

pub fn relative_table(
    baseline: &BTreeMap<String, f64>,
    adapted: &BTreeMap<String, f64>,
) -> Result<RelativeTable> {
    if baseline.len() != adapted.len() || baseline.keys().zip(adapted.keys()).any(|(a, b)| a != b) {
        let only_b: Vec<_> = baseline.keys().filter(|k| !adapted.contains_key(*k)).collect();
        let only_a: Vec<_> = adapted.keys().filter(|k| !baseline.contains_key(*k)).collect();
        return Err(SweepError::KeyMismatch(format!(
            "only in baseline: {only_b:?}; only in adapted: {only_a:?}"
        )));
    }
    if baseline.is_empty() {
        return Err(SweepError::KeyMismatch("no domains".into()));
    }
    let mut rows = BTreeMap::new();
    for (domain, &b) in baseline {
        let a = adapted[domain];
        rows.insert(domain.clone(), (b, a, relative_wer(b, a)?));
    }
    let n = rows.len() as f64;
    let mean_baseline = baseline.values().sum::<f64>() / n;
    let mean_adapted = adapted.values().sum::<f64>() / n;
    Ok(RelativeTable {
        mean_of_relatives: rows.values().map(|r| r.2).sum::<f64>() / n,
        relative_of_means: relative_wer(mean_baseline, mean_adapted)?,
        rows,
        mean_baseline,
        mean_adapted,
    })
}
