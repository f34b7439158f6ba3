//! End-to-end tests against the compiled binary: exit codes, file layout,
//! CSV shape and byte-level determinism across reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rbsde")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rbsde-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

#[test]
fn solve_counterexample5_writes_expected_rows() {
    let dir = temp_dir("solve-c5");
    let config = write_config(
        &dir,
        "run.json",
        r#"{
            "action": "solve",
            "scenario": {"kind": "counterexample5", "horizon": 1.0, "steps": 8},
            "output": {"dir": "unused"}
        }"#,
    );
    let out = dir.join("out");
    let result = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");

    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,index,t,B,Y,Z,K,L");
    assert_eq!(lines.len(), 1 + 45);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(report["tool"]["name"], "rbsde");
    assert_eq!(report["report"]["method"], "reflected");
    assert!(report["config"]["scenario"]["steps"].is_number());
}

#[test]
fn missing_action_exits_2_and_names_field() {
    let dir = temp_dir("missing-action");
    let config = write_config(
        &dir,
        "bad.json",
        r#"{"scenario": {"kind": "counterexample7", "horizon": 1.0, "steps": 4}}"#,
    );
    let result = run(&["run", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("action"), "stderr: {stderr}");
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = temp_dir("validate");
    let good = write_config(
        &dir,
        "good.json",
        r#"{
            "action": "penalize-sweep",
            "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                         "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 12},
            "penalty_schedule": [4.0, 16.0, 64.0]
        }"#,
    );
    assert!(run(&["validate", good.to_str().unwrap()]).status.success());

    let bad = write_config(
        &dir,
        "bad.json",
        r#"{
            "action": "penalize-sweep",
            "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                         "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 12},
            "penalty_schedule": [16.0, 4.0]
        }"#,
    );
    let result = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn precondition_violation_exits_3_with_error_report() {
    let dir = temp_dir("precondition");
    // Barrier above the terminal condition at maturity.
    let config = write_config(
        &dir,
        "run.json",
        r#"{
            "action": "solve",
            "scenario": {
                "kind": "custom",
                "driver": "linear(0, 0, 0)",
                "barrier": "1",
                "xi": "0",
                "horizon": 1.0,
                "steps": 4
            }
        }"#,
    );
    let out = dir.join("out");
    let result = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
    let error: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(error["error"]["exit_code"], 3);
}

#[test]
fn violated_comparison_exits_5() {
    let dir = temp_dir("compare-fail");
    // f = 1 dominates f = 0, so comparing in this order must report
    // violations and exit with the check-failure status.
    let config = write_config(
        &dir,
        "run.json",
        r#"{
            "action": "compare",
            "scenario": {
                "kind": "custom",
                "driver": "linear(0, 0, 1)",
                "xi": "b*b",
                "horizon": 1.0,
                "steps": 8
            },
            "compare_with": {
                "kind": "custom",
                "driver": "linear(0, 0, 0)",
                "xi": "b*b",
                "horizon": 1.0,
                "steps": 8
            }
        }"#,
    );
    let out = dir.join("out");
    let result = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(5), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert!(report["report"]["report"]["violation_count"].as_u64().unwrap() > 0);
    assert!(out.join("error.json").exists());
}

#[test]
fn probe_action_passes_on_honest_driver() {
    let dir = temp_dir("probe-ok");
    let config = write_config(
        &dir,
        "run.json",
        r#"{
            "action": "probe-hypotheses",
            "scenario": {"kind": "counterexample5", "horizon": 1.0, "steps": 8},
            "seed": 4,
            "probe_samples": 4000
        }"#,
    );
    let out = dir.join("out");
    let result = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("probes.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["all_passed"], true);
    // H2, H3 plus declared (Z) and (A)
    assert_eq!(report["report"]["reports"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_and_divergence_tables_have_one_row_per_level() {
    let dir = temp_dir("tables");
    let sweep_cfg = write_config(
        &dir,
        "sweep.json",
        r#"{
            "action": "penalize-sweep",
            "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                         "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 12},
            "penalty_schedule": [4.0, 16.0, 64.0],
            "order": 2.0
        }"#,
    );
    let out = dir.join("sweep-out");
    assert!(run(&["run", sweep_cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status
        .success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["rows"].as_array().unwrap().len(), 3);
    // The payload must round-trip through the typed schema, not just Value.
    let typed: rbsde_core::analysis::ConvergenceReport =
        serde_json::from_value(report["report"].clone()).unwrap();
    assert_eq!(typed.rows.len(), 3);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let div_cfg = write_config(
        &dir,
        "div.json",
        r#"{
            "action": "divergence-probe",
            "scenario": {"kind": "counterexample7", "horizon": 1.0, "steps": 4},
            "n_schedule": [4, 8, 12],
            "seed": 9
        }"#,
    );
    let out2 = dir.join("div-out");
    assert!(run(&["run", div_cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()])
        .status
        .success());
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("divergence.json")).unwrap()).unwrap();
    assert_eq!(table["report"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = temp_dir("determinism");
    let config = write_config(
        &dir,
        "run.json",
        r#"{
            "action": "penalize-sweep",
            "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                         "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 40},
            "penalty_schedule": [4.0, 64.0, 1024.0],
            "path_samples": 20000,
            "seed": 123
        }"#,
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert!(run(&["run", config.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["run", config.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
        .status
        .success());
    for name in ["sweep.json", "sweep.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = temp_dir("workers");
    let base = r#"{
        "action": "norms",
        "scenario": {"kind": "american_put", "rate": 0.05, "sigma": 0.2,
                     "strike": 100.0, "spot": 100.0, "horizon": 1.0, "steps": 30},
        "path_samples": 30000,
        "seed": 5,
        "workers": WORKERS
    }"#;
    let one = write_config(&dir, "one.json", &base.replace("WORKERS", "1"));
    let many = write_config(&dir, "many.json", &base.replace("WORKERS", "4"));
    let out_one = dir.join("one");
    let out_many = dir.join("many");
    assert!(run(&["run", one.to_str().unwrap(), "--out", out_one.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["run", many.to_str().unwrap(), "--out", out_many.to_str().unwrap()])
        .status
        .success());
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_one.join("norms.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_many.join("norms.json")).unwrap()).unwrap();
    assert_eq!(a["report"], b["report"]);
}

#[test]
fn scenarios_subcommand_lists_catalogue() {
    let result = run(&["scenarios"]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    for name in [
        "american_put",
        "linear_bsde",
        "counterexample5",
        "counterexample7",
        "custom",
    ] {
        assert!(stdout.contains(name), "missing {name}");
    }
}
