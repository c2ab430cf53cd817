use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use synvec::tensor_store::{read_checkpoint, write_checkpoint, Tensor, TensorMap};
use synvec::vector_ops::{
    compute_task_vector, cosine_similarity, ensemble_average, Granularity, Provenance, TaskVector,
};

struct Run {
    code: i32,
    stdout: Value,
    stderr: String,
}

fn synvec(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_synvec"))
        .args(args)
        .output()
        .expect("spawn synvec");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: if stdout.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(stdout.trim()).unwrap_or(Value::String(stdout))
        },
        stderr,
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_w(dir: &Path, name: &str, values: Vec<f32>) -> PathBuf {
    let n = values.len();
    let map = TensorMap::new()
        .with("w", Tensor::from_f32(vec![n], values).unwrap())
        .unwrap();
    let path = dir.join(name);
    write_checkpoint(&map, &path).unwrap();
    path
}

fn error_of(stderr: &str) -> Value {
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with("{\"error\""))
        .unwrap_or_else(|| panic!("no error JSON in {stderr}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn diff_of_fixture_pair() {
    let dir = tempfile::tempdir().unwrap();
    let real = write_w(dir.path(), "real.safetensors", vec![1.0, 2.0]);
    let syn = write_w(dir.path(), "syn.safetensors", vec![0.5, 1.5]);
    let tau = dir.path().join("tau.safetensors");
    let r = synvec(&["diff", s(&real), s(&syn), "-o", s(&tau), "--domain", "Alarm"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!((r.stdout["l2_norm"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
    let loaded = TaskVector::load(&tau).unwrap();
    assert_eq!(loaded.deltas().get("w").unwrap().to_f64_vec(), vec![0.5, 0.5]);
    assert_eq!(loaded.label(), Some("Alarm"));
}

#[test]
fn diff_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let real = write_w(dir.path(), "real.safetensors", vec![1.0, -3.0, 7.5]);
    let tau = dir.path().join("tau.safetensors");
    let r = synvec(&["diff", s(&real), s(&real), "-o", s(&tau)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout["l2_norm"].as_f64(), Some(0.0));
}

#[test]
fn missing_input_is_io_error_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let real = write_w(dir.path(), "real.safetensors", vec![1.0]);
    let missing = dir.path().join("nope.safetensors");
    let r = synvec(&["diff", s(&real), s(&missing), "-o", s(&dir.path().join("t"))]);
    assert_eq!(r.code, 2);
    assert_eq!(r.stdout, Value::Null);
    let err = error_of(&r.stderr);
    assert_eq!(err["error"]["exit_code"], 2);
    assert!(err["error"]["path"].as_str().unwrap().contains("nope.safetensors"));
}

#[test]
fn schema_mismatch_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_w(dir.path(), "a.safetensors", vec![1.0, 2.0]);
    let b = write_w(dir.path(), "b.safetensors", vec![1.0, 2.0, 3.0]);
    let r = synvec(&["diff", s(&a), s(&b), "-o", s(&dir.path().join("t"))]);
    assert_eq!(r.code, 1);
    assert_eq!(error_of(&r.stderr)["error"]["kind"], "schema_mismatch");
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(synvec(&["apply"]).code, 64);
    assert_eq!(synvec(&["--threads", "0", "ensemble", "x", "-o", "y"]).code, 64);
    let help = synvec(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.as_str().unwrap().contains("Usage"));
}

#[test]
fn apply_lambda_zero_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_w(dir.path(), "model.safetensors", vec![0.1, -2.5, 3.25e-7, 1e30]);
    let other = write_w(dir.path(), "other.safetensors", vec![1.0, 1.0, 1.0, 1.0]);
    let tau = dir.path().join("tau.safetensors");
    assert_eq!(synvec(&["diff", s(&other), s(&model), "-o", s(&tau)]).code, 0);
    let out = dir.path().join("out.safetensors");
    let r = synvec(&["apply", s(&model), s(&tau), "--lambda", "0", "-o", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let a = read_checkpoint(&model).unwrap();
    let b = read_checkpoint(&out).unwrap();
    assert!(a.bit_eq(&b));
    assert_eq!(r.stdout["model_schema"], r.stdout["output_schema"]);
}

#[test]
fn apply_reconstructs_real_from_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let realv = vec![0.25f32, -1.5, 1000.0, 3.0e-3];
    let real = write_w(dir.path(), "real.safetensors", realv.clone());
    let syn = write_w(dir.path(), "syn.safetensors", vec![0.3, -1.0, 999.0, -2.0e-3]);
    let tau = dir.path().join("tau.safetensors");
    assert_eq!(synvec(&["diff", s(&real), s(&syn), "-o", s(&tau)]).code, 0);
    let out = dir.path().join("out.safetensors");
    let r = synvec(&["apply", s(&syn), s(&tau), "--lambda", "1", "-o", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let got = read_checkpoint(&out).unwrap().get("w").unwrap().to_f64_vec();
    for (g, e) in got.iter().zip(&realv) {
        assert!((g - *e as f64).abs() <= 1e-6 * (*e as f64).abs().max(1.0), "{g} vs {e}");
    }
}

#[test]
fn apply_two_vectors_uses_their_mean() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write_w(dir.path(), "zero.safetensors", vec![0.0]);
    let one = write_w(dir.path(), "one.safetensors", vec![1.0]);
    let three = write_w(dir.path(), "three.safetensors", vec![3.0]);
    let t1 = dir.path().join("t1.safetensors");
    let t3 = dir.path().join("t3.safetensors");
    assert_eq!(synvec(&["diff", s(&one), s(&zero), "-o", s(&t1)]).code, 0);
    assert_eq!(synvec(&["diff", s(&three), s(&zero), "-o", s(&t3)]).code, 0);
    let out = dir.path().join("out.safetensors");
    let r = synvec(&["apply", s(&zero), s(&t1), s(&t3), "--lambda", "0.5", "-o", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_checkpoint(&out).unwrap().get("w").unwrap().to_f64_vec(), vec![1.0]);
}

#[test]
fn outputs_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let base = write_w(dir.path(), "base.safetensors", vec![0.0, 0.0, 0.0]);
    let a = write_w(dir.path(), "a.safetensors", vec![1.0, 0.0, 2.0]);
    let b = write_w(dir.path(), "b.safetensors", vec![1.0, 1.0, -0.5]);
    let ta = dir.path().join("ta.safetensors");
    let tb = dir.path().join("tb.safetensors");
    assert_eq!(synvec(&["diff", s(&a), s(&base), "-o", s(&ta), "--domain", "A"]).code, 0);
    assert_eq!(synvec(&["diff", s(&b), s(&base), "-o", s(&tb), "--domain", "B"]).code, 0);

    let base_map = read_checkpoint(&base).unwrap();
    let lib_a = compute_task_vector(&read_checkpoint(&a).unwrap(), &base_map, Provenance::domain("A")).unwrap();
    let lib_b = compute_task_vector(&read_checkpoint(&b).unwrap(), &base_map, Provenance::domain("B")).unwrap();
    let file_a = TaskVector::load(&ta).unwrap();
    assert!(file_a.deltas().bit_eq(lib_a.deltas()));

    let r = synvec(&["cosine", s(&ta), s(&tb)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lib_cos = cosine_similarity(&lib_a, &lib_b, Granularity::Global).unwrap().global().unwrap();
    assert_eq!(r.stdout["cosine"].as_f64().unwrap(), lib_cos);
    assert_eq!(r.stdout["labels"], serde_json::json!(["A", "B"]));

    let ens = dir.path().join("ens.safetensors");
    assert_eq!(synvec(&["ensemble", s(&ta), s(&tb), "-o", s(&ens)]).code, 0);
    let lib_ens = ensemble_average(&[lib_a, lib_b]).unwrap();
    assert!(TaskVector::load(&ens).unwrap().deltas().bit_eq(lib_ens.deltas()));

    let r = synvec(&["inspect", s(&ens)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout["tensor_count"], 1);
    assert_eq!(r.stdout["kind"], "task_vector");
}

/// Stub evaluator whose WER is |lambda - 0.4| + 1.
const STUB: &str = r#"awk -v l={lambda} 'BEGIN { d = l - 0.4; if (d < 0) d = -d; printf "{\"wer\": %.6f}\n", d + 1 }'"#;

fn sweep_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let model = write_w(dir, "model.safetensors", vec![0.0, 1.0]);
    let real = write_w(dir, "real.safetensors", vec![1.0, 1.0]);
    let tau = dir.join("tau.safetensors");
    assert_eq!(synvec(&["diff", s(&real), s(&model), "-o", s(&tau)]).code, 0);
    (model, tau)
}

#[test]
fn sweep_with_stub_evaluator_finds_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let (model, tau) = sweep_fixture(dir.path());
    let work = dir.path().join("work");
    let csv = dir.path().join("sweep.csv");
    let r = synvec(&[
        "sweep", s(&model), s(&tau), "--evaluator", STUB, "--workdir", s(&work),
        "--csv", s(&csv), "--no-timing", "--workers", "2",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!((r.stdout["best_lambda"].as_f64().unwrap() - 0.4).abs() < 1e-9);
    assert!((r.stdout["best_wer"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r.stdout["records"].as_array().unwrap().len(), 11);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("lambda,wer\n"));
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn sweep_with_failing_evaluator_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (model, tau) = sweep_fixture(dir.path());
    let r = synvec(&[
        "sweep", s(&model), s(&tau), "--grid", "0,0.5,1", "--evaluator", "sh -c 'exit 7'",
        "--workdir", s(&dir.path().join("work")),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn ablate_prefix_policy() {
    let dir = tempfile::tempdir().unwrap();
    let (model, tau) = sweep_fixture(dir.path());
    let r = synvec(&[
        "ablate", s(&model), s(&tau), s(&tau), "--lambda", "0.4", "--evaluator", STUB,
        "--workdir", s(&dir.path().join("work")),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let points = r.stdout["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert!((points[1]["mean_wer"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn report_table_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = dir.path().join("base.json");
    let adapted = dir.path().join("adapted.json");
    std::fs::write(&baseline, r#"{"Alarm": 16.13, "Audio": 14.69}"#).unwrap();
    std::fs::write(&adapted, r#"{"Alarm": 15.65, "Audio": 13.68}"#).unwrap();
    let out = dir.path().join("reports");
    let r = synvec(&[
        "report", "table", "--baseline", s(&baseline), "--adapted", s(&adapted),
        "--out-dir", s(&out), "--name", "t1",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let table = std::fs::read_to_string(out.join("t1/table.csv")).unwrap();
    assert!(table.lines().next().unwrap().starts_with("row,Alarm,Audio,average"));
    assert!(out.join("t1/manifest.json").exists());
    assert_eq!(r.stdout["manifest"]["files"][0]["path"], "table.csv");
}

#[test]
fn report_similarity_writes_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let base = write_w(dir.path(), "base.safetensors", vec![0.0, 0.0]);
    let a = write_w(dir.path(), "a.safetensors", vec![1.0, 0.0]);
    let b = write_w(dir.path(), "b.safetensors", vec![1.0, 1.0]);
    let ta = dir.path().join("ta.safetensors");
    let tb = dir.path().join("tb.safetensors");
    assert_eq!(synvec(&["diff", s(&a), s(&base), "-o", s(&ta)]).code, 0);
    assert_eq!(synvec(&["diff", s(&b), s(&base), "-o", s(&tb)]).code, 0);
    let out = dir.path().join("reports");
    let r = synvec(&[
        "report", "similarity", s(&ta), s(&tb), "--labels", "Alarm,Music", "--prefix", "B_",
        "--out-dir", s(&out), "--name", "sim",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(out.join("sim/similarity.csv")).unwrap();
    assert!(csv.contains("B_Alarm"));
    assert!(csv.contains("0.7071"));
    assert!(out.join("sim/similarity.svg").exists());
}

#[test]
fn toy_run_zero_gap_has_no_effect() {
    let r = synvec(&[
        "toy-run", "--zero-gap", "--num-seeds", "2", "--num-classes", "3", "--feature-dim", "4",
        "--samples-per-class", "10", "--eval-samples-per-class", "10", "--epochs", "3",
        "--finetune-epochs", "2", "--grid", "0,1",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout["report"]["mean_relative_reduction"].as_f64(), Some(0.0));
}
