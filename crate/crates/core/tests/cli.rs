use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gossip-td"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn solve_preset_prints_fixed_point() {
    let out = run(&["solve", "paper-4.1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["fixed_point"]["r_star"].as_array().unwrap().len(), 9);
    assert!(v["fixed_point"]["residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["error_report"]["e"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_average_preset_reports_mu() {
    let out = run(&["solve", "paper-4.1-average"]);
    assert!(out.status.success());
    assert!(json(&out)["fixed_point"]["mu_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn validate_identity_gossip_exits_2_naming_a3() {
    let out = run(&["validate", config("identity_gossip.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(A3)"));
}

#[test]
fn validate_shipped_configs() {
    for name in ["queue_discounted.json", "queue_average.json", "two_state.json"] {
        let out = run(&["validate", config(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(json(&out)["lifted_states"].as_u64().unwrap() > 0);
    }
}

#[test]
fn bounds_reports_inequalities() {
    let out = run(&["bounds", "paper-4.1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["componentwise_bound_holds"], true);
    assert!(v["max_error"].as_f64().unwrap() <= v["max_error_bound"].as_f64().unwrap());
    assert!(v["beta"].as_f64().unwrap() < 1.0);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(&["solve", "paper-4.1", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn missing_config_is_io_error() {
    let out = run(&["solve", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diverge.json");
    fs::write(
        &path,
        r#"{
            "chain": {"queue": {}},
            "gossip": "paper-4.1",
            "bases": "paper-4.1",
            "alpha": 0.9,
            "run": {"steps": 10000, "schedule": {"power": {"a": 1000000.0, "p": 1.0}}}
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["run", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "summary.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn run_twice_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for out in &outs {
        let status = run(&[
            "run",
            "paper-4.1-average",
            "--seed",
            "1",
            "--steps",
            "20000",
            "--out",
            out.to_str().unwrap(),
        ])
        .status;
        assert!(status.success());
    }
    let (a, b) = (artifacts(&outs[0]), artifacts(&outs[1]));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "coupled_metrics.csv",
            "coupled_mu.csv",
            "coupled_weights.csv",
            "error_report.json",
            "fixed_point.json",
            "uncoupled_metrics.csv",
            "uncoupled_mu.csv",
            "uncoupled_weights.csv",
        ]
    );
    assert_eq!(a, b);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(outs[0].join("summary.json")).unwrap()).unwrap();
    assert!(summary["runtime_seconds"].as_f64().is_some());
    assert!(summary["fixed_point"]["mu_star"].is_number());
}

#[test]
fn steps_override_sets_final_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert!(run(&["run", "paper-4.1", "--steps", "1234", "--out", out.to_str().unwrap()])
        .status
        .success());
    let csv = fs::read_to_string(out.join("coupled_metrics.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("1234,"));
}
