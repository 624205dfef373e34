use std::path::{Path, PathBuf};

use fw_merge::harness::{run_relevance, run_scaling, CheckpointCache, ExperimentConfig, MethodSpec, REPORT_HEADER};
use fw_merge::toy::{MlpArch, TaskSpec};
use fw_merge::Error;
use serde_json::json;

fn suite(dir: &Path, n: usize) {
    let tasks: Vec<TaskSpec> = (0..n).map(|i| TaskSpec::new(format!("t{i}"), 40 + i as u64, 4, 2)).collect();
    std::fs::write(dir.join("suite.json"), serde_json::to_string(&tasks).unwrap()).unwrap();
}

fn config(dir: &Path, patch: serde_json::Value) -> ExperimentConfig {
    suite(dir, 4);
    let mut cfg = json!({
        "suite": "suite.json",
        "arch": {"hidden": [6], "seed": 2},
        "pool": {"order": ["t0", "t1", "t2", "t3"], "epochs": 30, "lr": 0.5},
        "eval_tasks": ["t0", "t1"],
        "methods": [
            {"method": "fw-hard", "config": {"variant": "hard", "lmo": "layer", "budget": 3}},
            {"method": "fw-soft", "config": {"variant": "soft", "budget": 3, "k": 2}},
            {"method": "weight-average"},
            {"method": "task-arithmetic", "lambda": 0.3},
            {"method": "ties"}
        ],
        "n_calibration": 50,
        "sweep": {"sizes": [2, 4], "relevance": "irrelevant"},
        "output_dir": "out"
    });
    for (k, v) in patch.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    ExperimentConfig::load(path).unwrap()
}

fn config_error(dir: &Path, patch: serde_json::Value) -> String {
    let cfg = config(dir, patch);
    match cfg.validate(&cfg.load_suite().unwrap()) {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = config(d, json!({}));
    cfg.validate(&cfg.load_suite().unwrap()).unwrap();
    assert_eq!(cfg.suite, d.join("suite.json"));
    assert!(config_error(d, json!({"methods": []})).contains("methods"));
    assert!(config_error(d, json!({"eval_tasks": ["t0", "zz"]})).contains("zz"));
    assert!(config_error(d, json!({"sweep": {"sizes": [3, 2], "relevance": "irrelevant"}})).contains("ascending"));
    assert!(config_error(d, json!({"sweep": {"sizes": [2, 5], "relevance": "irrelevant"}})).contains("exceeds"));
    // t1 joins the sweep but is an evaluation task
    assert!(config_error(d, json!({"sweep": {"sizes": [1, 4], "relevance": "irrelevant"}})).contains("relevant"));
    assert!(config_error(d, json!({"sweep": {"sizes": [2, 4], "relevance": "relevant"}})).contains("irrelevant"));
    let dup = json!([{"method": "weight-average"}, {"method": "weight-average"}]);
    assert!(config_error(d, json!({"methods": dup})).contains("duplicate"));
    let labelled = json!([{"method": "weight-average"}, {"method": "weight-average", "label": "avg2"}]);
    let cfg = config(d, json!({"methods": labelled}));
    cfg.validate(&cfg.load_suite().unwrap()).unwrap();
    let wrong_variant = json!([{"method": "fw-soft", "config": {"variant": "hard"}}]);
    assert!(config_error(d, json!({"methods": wrong_variant})).contains("soft"));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    suite(dir.path(), 2);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"suite": "suite.json", "bogus": 1}"#).unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
}

#[test]
fn sweep_writes_ordered_report_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), json!({}));
    let out = run_scaling(&cfg).unwrap();
    let text = std::fs::read_to_string(&out.report_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines.len(), 1 + 5 * 2 * 2);
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods[0], "fw-hard");
    assert_eq!(methods[19], "ties");
    for r in &out.rows {
        assert!((0.0..=1.0).contains(&r.accuracy));
        assert!(r.peak_residency >= 1);
        assert_eq!(r.wall_ms, None);
    }
    assert_eq!(out.peak_residency("ties", 4), Some(4));
    assert_eq!(out.peak_residency("weight-average", 4), Some(1));
    for size in [2, 4] {
        assert!(out.peak_residency("fw-soft", size).unwrap() <= 2 + 2);
        assert!(out.peak_residency("fw-hard", size).unwrap() <= 1 + 2);
        // every FW row has a trace whose header carries the config
        let trace = cfg.output_dir.join(format!("traces/fw-soft_{size}.jsonl"));
        let (header, _) = fw_merge::fw::read_trace(&trace).unwrap();
        match &cfg.methods[1] {
            MethodSpec::FwSoft { config, .. } => assert_eq!(&header.config, config),
            _ => unreachable!(),
        }
    }
}

#[test]
fn timing_column_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), json!({"record_timing": true, "methods": [{"method": "weight-average"}]}));
    let out = run_scaling(&cfg).unwrap();
    assert!(out.rows.iter().all(|r| r.wall_ms.is_some()));
}

fn cached_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn corrupted_cache_entries_are_regenerated() {
    let dir = tempfile::tempdir().unwrap();
    let cache = CheckpointCache::new(dir.path().join("cache"));
    let arch = MlpArch::new(4, vec![3], 2);
    let base = arch.init(0);
    let (train, _) = TaskSpec::new("t", 1, 4, 2).generate().unwrap();
    let path = cache.get_or_train(&base, 0, &train, 5, 0.1).unwrap();
    assert_eq!(path, dir.path().join("cache/t_0_5.fwck"));
    let good = std::fs::read(&path).unwrap();
    assert_eq!(cached_files(cache.dir()).len(), 2);

    std::fs::write(&path, b"FWCK garbage").unwrap();
    let again = cache.get_or_train(&base, 0, &train, 5, 0.1).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), good);

    // a different learning rate invalidates the entry
    let other = cache.get_or_train(&base, 0, &train, 5, 0.2).unwrap();
    assert_ne!(std::fs::read(&other).unwrap(), good);
}

#[test]
fn relevance_matrix_shape_and_trivial_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), json!({}));
    let out = run_relevance(&cfg).unwrap();
    assert_eq!(out.scores.len(), 2);
    assert!(out.scores.values().all(|r| r.len() == 4));
    let text = std::fs::read_to_string(&out.matrix_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "task_id,t0,t1,t2,t3");

    let single = config(
        dir.path(),
        json!({"pool": {"order": ["t0"], "epochs": 30, "lr": 0.5}, "sweep": {"sizes": [1], "relevance": "irrelevant"}}),
    );
    let out = run_relevance(&single).unwrap();
    assert_eq!(out.own_minimal_fraction(), 1.0);
}

#[test]
fn own_checkpoints_win_on_easy_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        json!({"pool": {"order": ["t0", "t1"], "epochs": 50, "lr": 0.5}, "sweep": {"sizes": [2], "relevance": "irrelevant"}}),
    );
    assert_eq!(run_relevance(&cfg).unwrap().own_minimal_fraction(), 1.0);
}
