use std::collections::BTreeMap;

use super::bundle::{slug, Artifact, ReportBundle};
use super::error::{ReportError, Result};
use super::svg::{heatmap, line_chart, Series};
use crate::sweep::{relative_table, AblationResult, SweepResult};
use crate::tensor_store::Fingerprint;
use crate::vector_ops::{per_tensor_similarity, similarity_matrix, Granularity, SimilarityMatrix, TaskVector};

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    v.to_string()
}

/// `prefix + label` for each label, e.g. `B_` + `music`.
pub fn prefixed_labels(prefix: &str, labels: &[&str]) -> Vec<String> {
    labels.iter().map(|l| format!("{prefix}{l}")).collect()
}

/// Square matrix as CSV: a header of labels, then one labeled row per vector.
/// Undefined entries are empty cells.
pub fn matrix_csv(m: &SimilarityMatrix) -> String {
    let mut w = csv_writer();
    let mut header = vec![String::new()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (label, row) in m.labels.iter().zip(&m.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.map(num).unwrap_or_default()));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// Cosine-similarity heatmap(s) with matching CSV matrices.
///
/// Global granularity emits `similarity.csv` / `similarity.svg`; per-tensor
/// granularity emits one pair per tensor, named after the tensor.
pub fn build_similarity_report(
    name: &str,
    vectors: &[(String, &TaskVector)],
    granularity: Granularity,
) -> Result<ReportBundle> {
    if vectors.len() < 2 {
        return Err(ReportError::InvalidInput(
            "a similarity report needs at least two vectors".into(),
        ));
    }
    let mut bundle = ReportBundle::new(name);
    for (label, tau) in vectors {
        let fp = Fingerprint::of_map(tau.deltas(), true);
        bundle.inputs.insert(
            label.clone(),
            fp.content_hash.expect("content requested").to_hex(),
        );
    }
    let matrices: Vec<(String, String, SimilarityMatrix)> = match granularity {
        Granularity::Global => vec![(
            "similarity".into(),
            "Cosine similarity between task vectors".into(),
            similarity_matrix(vectors)?,
        )],
        Granularity::PerTensor => per_tensor_similarity(vectors)?
            .into_iter()
            .map(|(tensor, m)| {
                (
                    format!("similarity-{}", slug(&tensor)),
                    format!("Cosine similarity: {tensor}"),
                    m,
                )
            })
            .collect(),
    };
    for (stem, title, m) in matrices {
        bundle.tables.push(Artifact {
            file_name: format!("{stem}.csv"),
            content: matrix_csv(&m),
        });
        bundle.figures.push(Artifact {
            file_name: format!("{stem}.svg"),
            content: heatmap(&title, &m.labels, &m.values),
        });
    }
    Ok(bundle)
}

/// WER-vs-lambda curves: one `lambda,wer` CSV per series and one combined chart.
pub fn build_sweep_report(name: &str, results: &[(String, &SweepResult)]) -> Result<ReportBundle> {
    if results.is_empty() {
        return Err(ReportError::InvalidInput("no sweep results".into()));
    }
    let mut bundle = ReportBundle::new(name);
    let mut series = Vec::new();
    for (i, (label, result)) in results.iter().enumerate() {
        let file = format!("sweep-{:02}-{}.csv", i + 1, slug(label));
        bundle.inputs.insert(format!("series {}", i + 1), label.clone());
        bundle.tables.push(Artifact {
            file_name: file,
            content: result.to_csv(),
        });
        series.push(Series {
            label: label.clone(),
            points: result.curve(),
        });
    }
    bundle.figures.push(Artifact {
        file_name: "sweep.svg".into(),
        content: line_chart("WER vs. scaling factor", "scaling factor λ", "WER", &series),
    });
    Ok(bundle)
}

/// Baseline / adapted / relative rows per domain plus an `average` column.
///
/// The relative row's `average` is the mean of the per-domain relatives; the
/// `relative_of_averages` column holds the relative change between the two
/// average WERs.
pub fn build_table_report(
    name: &str,
    baseline: &BTreeMap<String, f64>,
    adapted: &BTreeMap<String, f64>,
) -> Result<ReportBundle> {
    let t = relative_table(baseline, adapted)?;
    let mut w = csv_writer();
    let mut header = vec!["row".to_string()];
    header.extend(t.rows.keys().cloned());
    header.extend(["average".to_string(), "relative_of_averages".to_string()]);
    w.write_record(&header).expect("in-memory write");
    let row = |label: &str, pick: fn(&(f64, f64, f64)) -> f64, avg: f64, extra: Option<f64>| {
        let mut rec = vec![label.to_string()];
        rec.extend(t.rows.values().map(|r| num(pick(r))));
        rec.push(num(avg));
        rec.push(extra.map(num).unwrap_or_default());
        rec
    };
    w.write_record(row("baseline", |r| r.0, t.mean_baseline, None))
        .expect("in-memory write");
    w.write_record(row("adapted", |r| r.1, t.mean_adapted, None))
        .expect("in-memory write");
    w.write_record(row("relative", |r| r.2, t.mean_of_relatives, Some(t.relative_of_means)))
        .expect("in-memory write");
    let mut bundle = ReportBundle::new(name);
    bundle.inputs.insert("domains".into(), t.rows.len().to_string());
    bundle.tables.push(Artifact {
        file_name: "table.csv".into(),
        content: finish(w),
    });
    Ok(bundle)
}

/// Mean WER versus number of source domains.
pub fn build_ablation_report(name: &str, label: &str, result: &AblationResult) -> Result<ReportBundle> {
    if result.points.is_empty() {
        return Err(ReportError::InvalidInput("ablation has no points".into()));
    }
    let mut bundle = ReportBundle::new(name);
    bundle.inputs.insert("series".into(), label.to_string());
    bundle.inputs.insert("lambda".into(), num(result.lambda));
    bundle.tables.push(Artifact {
        file_name: "ablation.csv".into(),
        content: result.to_csv(),
    });
    let series = [Series {
        label: label.to_string(),
        points: result.points.iter().map(|p| (p.k as f64, p.mean_wer)).collect(),
    }];
    bundle.figures.push(Artifact {
        file_name: "ablation.svg".into(),
        content: line_chart("WER vs. number of source domains", "source domains", "WER", &series),
    });
    Ok(bundle)
}
