use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use synvec::report::{
    build_ablation_report, build_similarity_report, build_sweep_report, build_table_report,
    ReportBundle,
};
use synvec::sweep::{
    run_domain_ablation, run_lambda_sweep, AblationPlan, AblationResult, LambdaGrid, SubsetPolicy,
    SweepConfig, SweepResult,
};
use synvec::tensor_store::{read_checkpoint, Fingerprint, MappedCheckpoint};
use synvec::toy::{
    load_protocol_config, run_domain_curve, run_ensemble_protocol, run_similarity_experiment,
    run_syn2real_protocol, ConditionShift, ProtocolConfig,
};
use synvec::vector_ops::{
    apply_files, compute_task_vector, cosine_similarity, ensemble_average, map_norm_stats,
    per_tensor_similarity, similarity_matrix, ApplyOptions, Cosine, Granularity, Provenance,
    TaskVector, KEY_KIND, KIND_TASK_VECTOR,
};

use crate::args::*;
use crate::error::{CliError, Result};

pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Diff(a) => diff(a),
        Command::Apply(a) => apply(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Cosine(a) => cosine(a),
        Command::Inspect(a) => inspect(a),
        Command::Sweep(a) => sweep(a),
        Command::Ablate(a) => ablate(a, cli.seed.unwrap_or(0)),
        Command::ToyRun(a) => toy_run(a, cli.seed),
        Command::Report(r) => report(r),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn load_taus(paths: &[PathBuf]) -> Result<Vec<TaskVector>> {
    paths.iter().map(|p| Ok(TaskVector::load(p)?)).collect()
}

fn global_l2(tau: &TaskVector) -> f64 {
    map_norm_stats(tau.deltas()).global.l2_norm
}

/// Explicit labels, else the recorded source domain, else the file stem; then prefixed.
fn labels_for(paths: &[PathBuf], taus: &[TaskVector], given: &[String], prefix: &str) -> Result<Vec<String>> {
    if !given.is_empty() && given.len() != paths.len() {
        return Err(CliError::usage(format!(
            "{} labels given for {} vectors",
            given.len(),
            paths.len()
        )));
    }
    Ok(paths
        .iter()
        .zip(taus)
        .enumerate()
        .map(|(i, (p, t))| {
            let base = given.get(i).cloned().unwrap_or_else(|| {
                t.label().map(str::to_string).unwrap_or_else(|| {
                    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                })
            });
            format!("{prefix}{base}")
        })
        .collect())
}

fn granularity(g: GranularityArg) -> Granularity {
    match g {
        GranularityArg::Global => Granularity::Global,
        GranularityArg::PerTensor => Granularity::PerTensor,
    }
}

fn grid(args: &GridArgs) -> Result<LambdaGrid> {
    if let Some(spec) = &args.grid_range {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::usage(format!("--grid-range {spec:?}: {e}")))?;
        let [start, stop, step] = parts[..] else {
            return Err(CliError::usage("--grid-range expects START:STOP:STEP"));
        };
        return Ok(LambdaGrid::range(start, stop, step)?);
    }
    if args.grid.is_empty() {
        Ok(LambdaGrid::default())
    } else {
        Ok(LambdaGrid::new(args.grid.clone())?)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::domain("invalid_json", format!("{}: {e}", path.display())))
}

fn diff(a: &DiffArgs) -> Result<Value> {
    let real = read_checkpoint(&a.real)?;
    let syn = read_checkpoint(&a.syn)?;
    let provenance = Provenance {
        source_domain: a.domain.clone(),
        real_label: a.real_label.clone(),
        syn_label: a.syn_label.clone(),
        created_from: Some((display(&a.real), display(&a.syn))),
        constituents: Vec::new(),
    };
    let tau = compute_task_vector(&real, &syn, provenance)?;
    tau.save(&a.out)?;
    Ok(json!({
        "out": display(&a.out),
        "tensors": tau.deltas().len(),
        "l2_norm": global_l2(&tau),
        "base_schema": tau.base_schema().schema_hash,
    }))
}

fn apply(a: &ApplyArgs) -> Result<Value> {
    let taus: Vec<&Path> = a.taus.iter().map(PathBuf::as_path).collect();
    let opts = ApplyOptions {
        allow_non_finite: a.allow_non_finite,
    };
    let summary = apply_files(&a.model, &taus, a.lambda, &a.out, opts)?;
    Ok(json!({
        "out": display(&a.out),
        "lambda": a.lambda,
        "vectors": taus.len(),
        "tensors": summary.tensors,
        "model_schema": summary.model_schema,
        "task_vector_schemas": summary.task_vector_schemas,
        "output_schema": summary.output_schema,
    }))
}

fn ensemble(a: &EnsembleArgs) -> Result<Value> {
    let taus = load_taus(&a.taus)?;
    let avg = ensemble_average(&taus)?;
    avg.save(&a.out)?;
    Ok(json!({
        "out": display(&a.out),
        "vectors": taus.len(),
        "l2_norm": global_l2(&avg),
        "base_schema": avg.base_schema().schema_hash,
        "provenance": avg.provenance(),
    }))
}

fn cosine(a: &CosineArgs) -> Result<Value> {
    let taus = load_taus(&a.taus)?;
    let labels = labels_for(&a.taus, &taus, &a.labels, &a.prefix)?;
    let named: Vec<(String, &TaskVector)> = labels.iter().cloned().zip(taus.iter()).collect();
    let mut out = json!({ "labels": labels, "granularity": granularity(a.granularity) });
    match a.granularity {
        GranularityArg::Global => {
            let m = similarity_matrix(&named)?;
            if taus.len() == 2 {
                out["cosine"] = json!(m.get(0, 1));
            }
            out["matrix"] = json!(m.values);
        }
        GranularityArg::PerTensor => {
            if taus.len() == 2 {
                if let Cosine::PerTensor(map) = cosine_similarity(&taus[0], &taus[1], Granularity::PerTensor)? {
                    out["cosine"] = json!(map);
                }
            }
            let per: BTreeMap<String, Value> = per_tensor_similarity(&named)?
                .into_iter()
                .map(|(k, m)| (k, json!(m.values)))
                .collect();
            out["matrices"] = json!(per);
        }
    }
    Ok(out)
}

fn inspect(a: &InspectArgs) -> Result<Value> {
    let ckpt = MappedCheckpoint::open(&a.path)?;
    let tensors: Vec<Value> = ckpt
        .metas()
        .iter()
        .map(|m| {
            json!({
                "name": m.name,
                "dtype": m.dtype.as_str(),
                "shape": m.shape,
                "data_offsets": [m.byte_range.begin, m.byte_range.end],
            })
        })
        .collect();
    let schema = ckpt.schema();
    let mut out = json!({
        "path": display(&a.path),
        "kind": ckpt.metadata().get(KEY_KIND).map(String::as_str).unwrap_or("checkpoint"),
        "tensors": tensors,
        "tensor_count": ckpt.metas().len(),
        "numel": ckpt.metas().iter().map(|m| m.shape.iter().product::<usize>()).sum::<usize>(),
        "data_bytes": ckpt.data_section().len(),
        "metadata": ckpt.metadata(),
        "schema_hash": schema.hash(),
        "widened_schema_hash": schema.widened().hash(),
    });
    if a.content_hash || a.stats {
        let map = ckpt.to_map()?;
        if a.content_hash {
            out["content_hash"] = json!(Fingerprint::of_map(&map, true).content_hash);
        }
        if a.stats {
            out["stats"] = json!(map_norm_stats(&map));
        }
        if ckpt.metadata().get(KEY_KIND).map(String::as_str) == Some(KIND_TASK_VECTOR) {
            let tau = TaskVector::from_tensor_map(map)?;
            out["provenance"] = json!(tau.provenance());
        }
    }
    Ok(out)
}

fn sweep_config(eval: &EvalArgs, lambda_grid: LambdaGrid) -> Result<SweepConfig> {
    let template = shell_split(&eval.evaluator)?;
    Ok(SweepConfig {
        lambda_grid,
        evaluator: template,
        workdir: eval.workdir.clone(),
        keep_checkpoints: eval.keep_checkpoints,
        parallel_workers: eval.workers,
    })
}

fn shell_split(line: &str) -> Result<Vec<String>> {
    let cmd = synvec::sweep::CommandEvaluator::from_command_line(line)?;
    Ok(cmd.template().to_vec())
}

fn export<T: serde::Serialize>(eval: &EvalArgs, result: &T, csv: String) -> Result<Value> {
    let value = json!(result);
    if let Some(p) = &eval.out {
        let mut text = serde_json::to_string_pretty(&value).expect("JSON value serializes");
        text.push('\n');
        write_text(p, &text)?;
    }
    if let Some(p) = &eval.csv {
        write_text(p, &csv)?;
    }
    Ok(value)
}

fn sweep(a: &SweepArgs) -> Result<Value> {
    let model = read_checkpoint(&a.model)?;
    let taus = load_taus(&a.taus)?;
    let config = sweep_config(&a.eval, grid(&a.grid)?)?;
    let mut result: SweepResult = run_lambda_sweep(&model, &taus, &config)?;
    if a.eval.no_timing {
        result = result.without_timing();
    }
    let csv = result.to_csv();
    export(&a.eval, &result, csv)
}

fn ablate(a: &AblateArgs, seed: u64) -> Result<Value> {
    let model = read_checkpoint(&a.model)?;
    let taus = load_taus(&a.taus)?;
    let config = sweep_config(&a.eval, LambdaGrid::default())?;
    let policy = match a.policy {
        PolicyArg::Prefix => SubsetPolicy::Prefix,
        PolicyArg::Random => SubsetPolicy::Random {
            seeds: if a.seeds.is_empty() {
                (0..a.num_seeds as u64).map(|i| seed.wrapping_add(i)).collect()
            } else {
                a.seeds.clone()
            },
        },
    };
    let plan = AblationPlan {
        lambda: a.lambda,
        policy,
        ks: (!a.ks.is_empty()).then(|| a.ks.clone()),
    };
    let result: AblationResult = run_domain_ablation(&model, &taus, &plan, &config)?;
    let csv = result.to_csv();
    export(&a.eval, &result, csv)
}

fn toy_config(a: &ToyArgs, seed: Option<u64>) -> Result<ProtocolConfig> {
    let mut cfg = match &a.config {
        Some(p) => load_protocol_config(p)?,
        None => ProtocolConfig::default(),
    };
    let d = &mut cfg.data;
    macro_rules! set {
        ($($field:expr => $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag { $field = v; })*
        };
    }
    set! {
        d.num_classes => a.num_classes,
        d.feature_dim => a.feature_dim,
        d.class_mean_scale => a.class_mean_scale,
        d.condition_shift.bias_scale => a.bias_scale,
        d.condition_shift.channel_scale => a.channel_scale,
        d.condition_shift.noise_std => a.noise_std,
        d.base_noise_std => a.base_noise_std,
        d.domain_offset_scale => a.domain_offset_scale,
        d.num_source_domains => a.source_domains,
        d.synthetic_family => a.family,
        d.samples_per_class => a.samples_per_class,
        d.eval_samples_per_class => a.eval_samples_per_class,
        d.seed => seed,
        cfg.num_seeds => a.num_seeds,
        cfg.train.learning_rate => a.learning_rate,
        cfg.train.epochs => a.epochs,
        cfg.finetune_epochs => a.finetune_epochs,
        cfg.train.batch_size => a.batch_size,
        cfg.train.l2_penalty => a.l2_penalty,
    }
    if a.zero_gap {
        cfg.data.condition_shift = ConditionShift::NONE;
    }
    if !a.grid.grid.is_empty() || a.grid.grid_range.is_some() {
        cfg.lambda_grid = grid(&a.grid)?;
    }
    if a.persist_dir.is_some() {
        cfg.persist_dir = a.persist_dir.clone();
    }
    Ok(cfg)
}

fn families(specs: &[String]) -> Result<Vec<(String, u64)>> {
    specs
        .iter()
        .map(|s| {
            let (prefix, id) = s
                .rsplit_once(':')
                .ok_or_else(|| CliError::usage(format!("family {s:?} is not PREFIX:ID")))?;
            let id = id
                .parse()
                .map_err(|e| CliError::usage(format!("family {s:?}: {e}")))?;
            Ok((prefix.to_string(), id))
        })
        .collect()
}

fn toy_run(a: &ToyArgs, seed: Option<u64>) -> Result<Value> {
    let cfg = toy_config(a, seed)?;
    let mut out = match a.mode {
        ToyMode::Single | ToyMode::Ensemble => {
            let report = if a.mode == ToyMode::Single {
                run_syn2real_protocol(&cfg)?
            } else {
                run_ensemble_protocol(&cfg)?
            };
            if let Some(p) = &a.csv {
                write_text(p, &report.to_csv())?;
            }
            json!({ "report": report })
        }
        ToyMode::Curve => json!({ "curve": run_domain_curve(&cfg)? }),
        ToyMode::Similarity => {
            let fams = families(&a.families)?;
            let exp = run_similarity_experiment(&cfg, &fams)?;
            let mut v = json!({
                "labels": exp.labels,
                "families": exp.families,
                "matrix": exp.matrix.values,
                "per_seed": exp.per_seed,
                "mean_intra": exp.mean_intra,
                "mean_inter": exp.mean_inter,
            });
            if let Some(root) = &a.report_dir {
                let named: Vec<(String, &TaskVector)> =
                    exp.labels.iter().cloned().zip(exp.vectors.iter()).collect();
                let bundle = build_similarity_report("toy-similarity", &named, Granularity::Global)?;
                v["report_dir"] = json!(display(&bundle.write(root)?));
            }
            v
        }
    };
    out["config"] = json!(cfg);
    Ok(out)
}

fn emit(bundle: ReportBundle, out: &ReportOut) -> Result<Value> {
    let dir = bundle.write(&out.out_dir)?;
    Ok(json!({ "dir": display(&dir), "manifest": bundle.manifest() }))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn report(r: &ReportCommand) -> Result<Value> {
    match r {
        ReportCommand::Similarity {
            taus,
            labels,
            prefix,
            granularity: g,
            out,
        } => {
            let vectors = load_taus(taus)?;
            let labels = labels_for(taus, &vectors, labels, prefix)?;
            let named: Vec<(String, &TaskVector)> = labels.into_iter().zip(vectors.iter()).collect();
            let name = out.name.clone().unwrap_or_else(|| "similarity".into());
            emit(build_similarity_report(&name, &named, granularity(*g))?, out)
        }
        ReportCommand::Sweep { results, labels, out } => {
            if !labels.is_empty() && labels.len() != results.len() {
                return Err(CliError::usage(format!(
                    "{} labels given for {} results",
                    labels.len(),
                    results.len()
                )));
            }
            let loaded: Vec<SweepResult> = results.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
            let series: Vec<(String, &SweepResult)> = results
                .iter()
                .zip(&loaded)
                .enumerate()
                .map(|(i, (p, r))| (labels.get(i).cloned().unwrap_or_else(|| stem(p)), r))
                .collect();
            let name = out.name.clone().unwrap_or_else(|| "sweep".into());
            emit(build_sweep_report(&name, &series)?, out)
        }
        ReportCommand::Table { baseline, adapted, out } => {
            let b: BTreeMap<String, f64> = read_json(baseline)?;
            let a: BTreeMap<String, f64> = read_json(adapted)?;
            let name = out.name.clone().unwrap_or_else(|| "table".into());
            emit(build_table_report(&name, &b, &a)?, out)
        }
        ReportCommand::Ablation { result, label, out } => {
            let r: AblationResult = read_json(result)?;
            let label = label.clone().unwrap_or_else(|| stem(result));
            let name = out.name.clone().unwrap_or_else(|| "ablation".into());
            emit(build_ablation_report(&name, &label, &r)?, out)
        }
    }
}
