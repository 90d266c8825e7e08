mod common;

use std::collections::HashSet;

use common::small_pipeline_config;
use deep_lstm_iss::datasets::{
    gen_prbs, generate_dataset, generate_experiments, load_dataset, save_dataset, PiecewiseUniform, Role,
};

#[test]
fn splits_are_disjoint_from_the_test_tail() {
    let cfg = small_pipeline_config();
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    let t_s = cfg.data.split.t_s;
    let test = &ds.splits.test;
    let test_range = test.start..test.start + test.u.len();
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    for s in ds.splits.train.iter().chain(&ds.splits.val) {
        assert_eq!(s.len(), t_s + 1);
        assert!(s.u.iter().flatten().all(|v| v.abs() <= 1.0));
        for k in s.start..=s.start + t_s {
            used.insert((s.experiment, k));
        }
    }
    for k in test_range {
        assert!(!used.contains(&(test.experiment, k)));
    }
    // train and validation windows never share a sample either
    let train: HashSet<_> = ds
        .splits
        .train
        .iter()
        .flat_map(|s| (s.start..=s.start + t_s).map(move |k| (s.experiment, k)))
        .collect();
    for s in &ds.splits.val {
        for k in s.start..=s.start + t_s {
            assert!(!train.contains(&(s.experiment, k)));
        }
    }
    assert!(ds.splits.regions.iter().any(|r| r.role == Role::Test && r.experiment == 0));
}

#[test]
fn generation_is_a_pure_function_of_seed() {
    let cfg = small_pipeline_config();
    let a = generate_experiments(&cfg.data, 3).unwrap();
    let b = generate_experiments(&cfg.data, 3).unwrap();
    let c = generate_experiments(&cfg.data, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn saved_dataset_reloads_and_resaves_identically() {
    let cfg = small_pipeline_config();
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path().join("a"), &ds).unwrap();
    let back = load_dataset(dir.path().join("a")).unwrap();
    assert_eq!(back, ds);
    save_dataset(dir.path().join("b"), &back).unwrap();
    for f in ["experiment_1.csv", "experiment_3.csv", "meta.json"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let head = std::fs::read_to_string(dir.path().join("a/experiment_1.csv")).unwrap();
    assert!(head.starts_with("t,u,y1,y2\n"));
}

#[test]
fn corrupted_dataset_is_reported() {
    let cfg = small_pipeline_config();
    let ds = generate_dataset(&cfg.data, cfg.seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let p = dir.path().join("experiment_2.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    let cut: String = text.lines().take(100).map(|l| format!("{l}\n")).collect();
    std::fs::write(&p, cut).unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("experiment 2"), "{err}");
}

#[test]
fn surrogate_outputs_look_like_brake_pressures() {
    let cfg = deep_lstm_iss::PipelineConfig::default();
    let raw = generate_experiments(&cfg.data, 0).unwrap();
    for e in &raw {
        assert_eq!(e.len(), 36_000);
        let max_p = e.y.iter().flatten().copied().fold(0.0, f64::max);
        assert!(max_p > 30.0 && max_p <= 50.0, "{max_p}");
        assert!(e.y.iter().flatten().all(|&p| p >= 0.0));
    }
    // per-experiment distributions differ
    let mean = |k: usize| raw[k].u.iter().map(|u| u[0]).sum::<f64>() / raw[k].len() as f64;
    assert!((mean(4) - mean(5)).abs() > 1.0);
    let _ = gen_prbs(1.0, 200.0, &PiecewiseUniform::uniform(0.0, 1.0), &PiecewiseUniform::uniform(0.5, 1.5), 0).unwrap();
}
