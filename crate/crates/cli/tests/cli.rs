use std::path::Path;
use std::process::Command;

use fw_merge::checkpoint::{load_checkpoint, save_checkpoint};
use fw_merge::toy::{MlpArch, TaskSpec};
use fw_merge::ParamSet;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fw-merge"))
}

fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Pool of three 2-D points plus a base model and a quadratic objective.
fn quadratic_fixture(dir: &Path, target: [f64; 2]) {
    let pool = dir.join("pool");
    std::fs::create_dir_all(&pool).unwrap();
    for (i, p) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        save_checkpoint(&ParamSet::vector("x", p.to_vec()), pool.join(format!("v{i}.fwck"))).unwrap();
    }
    save_checkpoint(&ParamSet::vector("x", vec![0.2, 0.2]), dir.join("base.fwck")).unwrap();
    save_checkpoint(&ParamSet::vector("x", target.to_vec()), dir.join("target.fwck")).unwrap();
    write_json(&dir.join("objective.json"), &serde_json::json!({"type": "quadratic", "target": "target.fwck"}));
}

fn merge_args(dir: &Path, out: &str, trace: &str) -> Vec<String> {
    let p = |s: &str| dir.join(s).display().to_string();
    vec![
        "merge".into(),
        "--pool".into(),
        p("pool"),
        "--base".into(),
        p("base.fwck"),
        "--objective".into(),
        p("objective.json"),
        "--variant".into(),
        "soft".into(),
        "--budget".into(),
        "5".into(),
        "--out".into(),
        p(out),
        "--trace".into(),
        p(trace),
    ]
}

#[test]
fn pool_of_only_the_base_returns_the_base() {
    let dir = tempfile::tempdir().unwrap();
    let base = ParamSet::vector("x", vec![0.5, -0.25]);
    std::fs::create_dir(dir.path().join("pool")).unwrap();
    save_checkpoint(&base, dir.path().join("pool/base.fwck")).unwrap();
    save_checkpoint(&base, dir.path().join("base.fwck")).unwrap();
    save_checkpoint(&ParamSet::vector("x", vec![3.0, 3.0]), dir.path().join("target.fwck")).unwrap();
    write_json(
        &dir.path().join("objective.json"),
        &serde_json::json!({"type": "quadratic", "target": "target.fwck"}),
    );
    let status = bin().args(merge_args(dir.path(), "out.fwck", "trace.jsonl")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(load_checkpoint(dir.path().join("out.fwck")).unwrap(), base);
}

#[test]
fn missing_pool_directory_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    quadratic_fixture(dir.path(), [0.3, 0.3]);
    std::fs::remove_dir_all(dir.path().join("pool")).unwrap();
    let out = bin().args(merge_args(dir.path(), "out.fwck", "trace.jsonl")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    quadratic_fixture(dir.path(), [0.3, 0.4]);
    for (out, trace) in [("a.fwck", "a.jsonl"), ("b.fwck", "b.jsonl")] {
        let status = bin().args(merge_args(dir.path(), out, trace)).status().unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.fwck"), read("b.fwck"));
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    let merged = load_checkpoint(dir.path().join("a.fwck")).unwrap();
    let start = ParamSet::vector("x", vec![0.2, 0.2]);
    let target = ParamSet::vector("x", vec![0.3, 0.4]);
    assert!(merged.sub(&target).unwrap().norm() < start.sub(&target).unwrap().norm());
}

#[test]
fn non_finite_loss_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    quadratic_fixture(dir.path(), [1e200, 1e200]);
    let status = bin().args(merge_args(dir.path(), "out.fwck", "trace.jsonl")).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn bad_flag_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    quadratic_fixture(dir.path(), [0.3, 0.3]);
    let mut args = merge_args(dir.path(), "out.fwck", "trace.jsonl");
    args.extend(["--k".into(), "9".into()]);
    assert_eq!(bin().args(&args).status().unwrap().code(), Some(2));
    let mut args = merge_args(dir.path(), "out.fwck", "trace.jsonl");
    args[8] = "medium".into();
    assert_eq!(bin().args(&args).status().unwrap().code(), Some(2));
}

fn small_suite(dir: &Path) {
    let suite: Vec<TaskSpec> = (0..3).map(|i| TaskSpec::new(format!("t{i}"), 10 + i as u64, 4, 2)).collect();
    std::fs::write(dir.join("suite.json"), serde_json::to_string(&suite).unwrap()).unwrap();
}

fn experiment(dir: &Path, methods: serde_json::Value) -> std::path::PathBuf {
    small_suite(dir);
    let cfg = serde_json::json!({
        "suite": "suite.json",
        "arch": {"hidden": [6], "seed": 3},
        "pool": {"order": ["t0", "t1", "t2"], "epochs": 20, "lr": 0.5},
        "eval_tasks": ["t0", "t1"],
        "n_calibration": 50,
        "methods": methods,
        "sweep": {"sizes": [2, 3], "relevance": "irrelevant"},
        "output_dir": "out"
    });
    let path = dir.join("experiment.json");
    write_json(&path, &cfg);
    path
}

#[test]
fn empty_methods_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path(), serde_json::json!([]));
    let out = bin().arg("scaling").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("methods"));
}

#[test]
fn scaling_and_relevance_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(
        dir.path(),
        serde_json::json!([
            {"method": "fw-soft", "config": {"variant": "soft", "budget": 3, "k": 2}},
            {"method": "ties"}
        ]),
    );
    assert_eq!(bin().arg("scaling").arg(&cfg).status().unwrap().code(), Some(0));
    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,pool_size,relevance,task_id,accuracy,mean_accuracy,wall_ms,peak_residency");
    // 2 methods x 2 sizes x 2 eval tasks
    assert_eq!(lines.len(), 1 + 8);
    assert!(dir.path().join("out/traces/fw-soft_3.jsonl").exists());
    assert!(dir.path().join("out/cache/t2_3_20.fwck").exists());

    let out = bin().arg("relevance").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let matrix = std::fs::read_to_string(dir.path().join("out/relevance.csv")).unwrap();
    let rows: Vec<&str> = matrix.lines().collect();
    assert_eq!(rows.len(), 1 + 2);
    assert!(rows.iter().all(|r| r.split(',').count() == 1 + 3));
}

#[test]
fn mlp_objective_merge() {
    let dir = tempfile::tempdir().unwrap();
    small_suite(dir.path());
    let arch = MlpArch::new(4, vec![5], 2);
    let base = arch.init(1);
    std::fs::create_dir(dir.path().join("pool")).unwrap();
    let suite = fw_merge::toy::load_suite(dir.path().join("suite.json")).unwrap();
    for t in &suite[..2] {
        let (train, _) = t.generate().unwrap();
        let tuned = fw_merge::toy::finetune(&base, &train, 30, 0.5).unwrap();
        save_checkpoint(&tuned, dir.path().join(format!("pool/{}.fwck", t.task_id))).unwrap();
    }
    save_checkpoint(&base, dir.path().join("base.fwck")).unwrap();
    write_json(
        &dir.path().join("objective.json"),
        &serde_json::json!({"type": "mlp", "suite": "suite.json", "tasks": ["t0", "t1"], "n_calibration": 40}),
    );
    let mut args = merge_args(dir.path(), "out.fwck", "trace.jsonl");
    args.extend(["--lmo".into(), "layer".into(), "--lambda".into(), "layer".into()]);
    assert_eq!(bin().args(&args).status().unwrap().code(), Some(0));
    let merged = load_checkpoint(dir.path().join("out.fwck")).unwrap();
    assert!(merged.check_same_schema(&base).is_ok());
    let (header, records) = fw_merge::fw::read_trace(dir.path().join("trace.jsonl")).unwrap();
    assert!(header.initial_added);
    assert!(!records.is_empty());
}
