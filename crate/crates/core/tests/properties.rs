mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use synvec::report::build_similarity_report;
use synvec::sweep::{relative_wer, run_lambda_sweep_with, EvalOutput, EvalRequest, SweepConfig};
use synvec::tensor_store::{from_bytes, schema_of, to_bytes, DType, TensorMap};
use synvec::toy::{generate_toy_data, Condition, Domain, Split, ToyDataSpec};
use synvec::vector_ops::{
    apply_ensemble, apply_task_vector, compute_task_vector, cosine_similarity, ensemble_average,
    Granularity, Provenance, TaskVector,
};

const FLOATS: [DType; 2] = [DType::F32, DType::F64];

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig::with_cases(cases)
}

/// Per-element `|got - want| <= tol * scale` for every tensor.
fn assert_close(got: &TensorMap, want: &TensorMap, scale: &TensorMap, rel: impl Fn(DType) -> f64) {
    assert_eq!(schema_of(got), schema_of(want));
    for (name, g) in got.iter() {
        let w = want.get(name).unwrap().to_f64_vec();
        let s = scale.get(name).unwrap().to_f64_vec();
        for ((g, w), s) in g.to_f64_vec().iter().zip(&w).zip(&s) {
            let tol = rel(g_dtype(got, name)) * s.max(f64::MIN_POSITIVE);
            assert!((g - w).abs() <= tol, "{name}: {g} vs {w} (tol {tol})");
        }
    }
}

fn g_dtype(map: &TensorMap, name: &str) -> DType {
    map.get(name).unwrap().dtype()
}

fn rel_tol(d: DType) -> f64 {
    match d {
        DType::F64 => 1e-12,
        _ => 1e-6,
    }
}

/// Elementwise `sum_i |maps_i|` weighted by `weights`.
fn magnitude(maps: &[(&TensorMap, f64)]) -> TensorMap {
    let mut out = TensorMap::new();
    for (name, t) in maps[0].0.iter() {
        let mut acc = vec![0.0; t.numel()];
        for (m, w) in maps {
            for (a, v) in acc.iter_mut().zip(m.get(name).unwrap().to_f64_vec()) {
                *a += w.abs() * v.abs();
            }
        }
        out.insert(name, synvec::tensor_store::Tensor::from_f64(t.shape().to_vec(), acc).unwrap())
            .unwrap();
    }
    out
}

fn tau_from(seed: u64, n: usize, dtypes: &[DType]) -> (TensorMap, TaskVector) {
    let mut r = rng(seed);
    let model = random_map(&mut r, n, 64, dtypes);
    let real = like(&mut r, &model);
    let tau = compute_task_vector(&real, &model, Provenance::default()).unwrap();
    (model, tau)
}

fn f64_vector(values: &[f64]) -> TaskVector {
    let map = TensorMap::new()
        .with("w", synvec::tensor_store::Tensor::from_f64(vec![values.len()], values.to_vec()).unwrap())
        .unwrap();
    TaskVector::from_deltas(map, Provenance::default()).unwrap()
}

fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), n in 0usize..6) {
        let mut r = rng(seed);
        let mut map = random_map(&mut r, n, 256, &[DType::F16, DType::F32, DType::F64]);
        map.set_metadata("note", format!("seed {seed}"));
        let bytes = to_bytes(&map);
        let back = from_bytes(&bytes).unwrap();
        prop_assert!(back.bit_eq(&map));
        prop_assert_eq!(back.metadata(), map.metadata());
        prop_assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn schema_hash_tracks_schema_equality(a in any::<u64>(), b in any::<u64>()) {
        let ma = random_map(&mut rng(a), 3, 16, &[DType::F16, DType::F32]);
        let mb = random_map(&mut rng(b), 3, 16, &[DType::F16, DType::F32]);
        let same = like(&mut rng(b), &ma);
        prop_assert_eq!(schema_of(&ma).hash(), schema_of(&same).hash());
        prop_assert_eq!(schema_of(&ma) == schema_of(&mb), schema_of(&ma).hash() == schema_of(&mb).hash());
    }

    #[test]
    fn zero_lambda_is_bit_identity(seed in any::<u64>()) {
        let (model, tau) = tau_from(seed, 4, &[DType::F16, DType::F32, DType::F64]);
        prop_assert!(apply_task_vector(&model, &tau, 0.0).unwrap().bit_eq(&model));
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn apply_reconstructs_real(seed in any::<u64>()) {
        let mut r = rng(seed);
        let syn = random_map(&mut r, 4, 64, &FLOATS);
        let real = like(&mut r, &syn);
        let tau = compute_task_vector(&real, &syn, Provenance::default()).unwrap();
        let got = apply_task_vector(&syn, &tau, 1.0).unwrap();
        let scale = magnitude(&[(&real, 1.0), (&syn, 1.0)]);
        assert_close(&got, &real, &scale, rel_tol);
    }

    #[test]
    fn scaling_is_additive(seed in any::<u64>(), l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
        let (model, tau) = tau_from(seed, 3, &FLOATS);
        let twice = apply_task_vector(&apply_task_vector(&model, &tau, l1).unwrap(), &tau, l2).unwrap();
        let once = apply_task_vector(&model, &tau, l1 + l2).unwrap();
        let scale = magnitude(&[(&model, 1.0), (tau.deltas(), l1.abs() + l2.abs())]);
        assert_close(&twice, &once, &scale, |d| 2.0 * rel_tol(d));
    }

    #[test]
    fn ensemble_is_linear(seed in any::<u64>(), k in 1usize..5, lambda in -2.0f64..2.0) {
        let mut r = rng(seed);
        let model = random_map(&mut r, 3, 64, &FLOATS);
        let taus: Vec<TaskVector> = (0..k)
            .map(|_| compute_task_vector(&like(&mut r, &model), &model, Provenance::default()).unwrap())
            .collect();
        let direct = apply_ensemble(&model, &taus, lambda).unwrap();
        let via_avg = apply_task_vector(&model, &ensemble_average(&taus).unwrap(), lambda).unwrap();
        let mut weights = vec![(&model, 1.0)];
        weights.extend(taus.iter().map(|t| (t.deltas(), lambda / k as f64)));
        assert_close(&direct, &via_avg, &magnitude(&weights), |d| 2.0 * rel_tol(d));
    }

    #[test]
    fn ensemble_ignores_order(seed in any::<u64>(), k in 2usize..6) {
        let mut r = rng(seed);
        let model = random_map(&mut r, 3, 32, &[DType::F16, DType::F32]);
        let mut taus: Vec<TaskVector> = (0..k)
            .map(|_| compute_task_vector(&like(&mut r, &model), &model, Provenance::default()).unwrap())
            .collect();
        let forward = ensemble_average(&taus).unwrap();
        taus.reverse();
        taus.rotate_left(r.random_range(0..k));
        let shuffled = ensemble_average(&taus).unwrap();
        prop_assert!(forward.deltas().bit_eq(shuffled.deltas()));
    }

    #[test]
    fn singleton_ensemble_is_identity(seed in any::<u64>()) {
        let (_, tau) = tau_from(seed, 3, &[DType::F16, DType::F32, DType::F64]);
        let avg = ensemble_average(std::slice::from_ref(&tau)).unwrap();
        prop_assert!(avg.deltas().bit_eq(tau.deltas()));
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in nonzero_vec(8), b in nonzero_vec(8)) {
        let (va, vb) = (f64_vector(&a), f64_vector(&b));
        let ab = cosine_similarity(&va, &vb, Granularity::Global).unwrap().global().unwrap();
        let ba = cosine_similarity(&vb, &va, Granularity::Global).unwrap().global().unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0..=1.0).contains(&ab));
        let aa = cosine_similarity(&va, &va, Granularity::Global).unwrap().global().unwrap();
        prop_assert!((aa - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant(a in nonzero_vec(8), b in nonzero_vec(8), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let (va, vb) = (f64_vector(&a), f64_vector(&b));
        let base = cosine_similarity(&va, &vb, Granularity::Global).unwrap().global().unwrap();
        let scaled = cosine_similarity(&va, &vb.scaled(c).unwrap(), Granularity::Global).unwrap().global().unwrap();
        prop_assert!((scaled - c.signum() * base).abs() <= 1e-9, "{scaled} vs {base}");
    }

    #[test]
    fn relative_wer_reconstructs_adapted(b in 0.01f64..100.0, a in 0.0f64..100.0) {
        let rel = relative_wer(b, a).unwrap();
        prop_assert!((b * (1.0 - rel / 100.0) - a).abs() <= 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(gradient_check(seed) <= 1e-5);
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn sweep_best_never_worse_than_baseline(wers in prop::collection::vec(0.0f64..100.0, 11)) {
        let dir = tempfile::tempdir().unwrap();
        let (model, tau) = tau_from(7, 2, &[DType::F32]);
        let table = wers.clone();
        let eval = move |req: &EvalRequest| {
            let i = (req.lambda * 10.0).round() as usize;
            Ok(EvalOutput { wer: table[i], stdout: String::new() })
        };
        let config = SweepConfig::new(dir.path());
        let result = run_lambda_sweep_with(&model, &[tau], &config, &eval).unwrap();
        let at_zero = result.records.iter().find(|r| r.lambda == 0.0).unwrap().wer;
        prop_assert_eq!(at_zero, wers[0]);
        prop_assert!(result.best_wer <= at_zero);
        let csv: Vec<f64> = result.to_csv().lines().skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        prop_assert_eq!(csv, wers);
    }

    #[test]
    fn similarity_csv_is_symmetric(vs in prop::collection::vec(nonzero_vec(6), 2..6)) {
        let taus: Vec<TaskVector> = vs.iter().map(|v| f64_vector(v)).collect();
        let labeled: Vec<(String, &TaskVector)> =
            taus.iter().enumerate().map(|(i, t)| (format!("v{i}"), t)).collect();
        let bundle = build_similarity_report("sim", &labeled, Granularity::Global).unwrap();
        let rows: Vec<Vec<f64>> = bundle.table("similarity.csv").unwrap().lines().skip(1)
            .map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect())
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((v - rows[j][i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn toy_data_is_pure(seed in any::<u64>(), domain in 0usize..3) {
        let spec = ToyDataSpec {
            seed,
            num_classes: 3,
            feature_dim: 4,
            samples_per_class: 5,
            num_source_domains: 3,
            ..ToyDataSpec::default()
        };
        let gen = || generate_toy_data(&spec, Domain::Source(domain), Condition::Synthetic, Split::Train).unwrap();
        let (a, b) = (gen(), gen());
        prop_assert_eq!(&a.features, &b.features);
        prop_assert_eq!(&a.labels, &b.labels);
    }
}
