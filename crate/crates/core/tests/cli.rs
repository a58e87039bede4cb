//! End-to-end runs of the `gridcrew` binary.

use std::path::Path;
use std::process::{Command, Output};

const ONE_CASE: &str = r#"customer_order = [2, 4, 5, 6, 7]

[[cases]]
name = "only"
calls = [0, 0, 1, 0, 0]
damaged = ["L5"]
"#;

fn gridcrew(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gridcrew"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("GRIDCREW_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, body)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no {name} column in {header:?}"))
}

/// Runs a one-case vanilla comparison in `dir` and returns the `M` it recorded.
fn compare_m(dir: &Path, extra: &[&str], env: &[(&str, &str)]) -> String {
    std::fs::write(dir.join("one.cases"), ONE_CASE).unwrap();
    let mut args = vec!["compare", "--scenario", "eight_node", "--cases", "one.cases", "--algorithms", "vanilla_mcts", "--seeds", "0", "--out", "cmp"];
    args.extend_from_slice(extra);
    let o = gridcrew(dir, &args, env);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, body) = rows(&dir.join("cmp/compare.csv"));
    body[0][column(&h, "M")].clone()
}

#[test]
fn missing_scenario_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridcrew(dir.path(), &["validate-scenario", "nowhere/grid.scenario"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/grid.scenario"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridcrew(dir.path(), &["train", "--scenario", "eight_node", "--episodes", "0"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = gridcrew(dir.path(), &["compare", "--scenario", "eight_node", "--algorithms", "random"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("random"));
    let o = gridcrew(dir.path(), &["evaluate", "--no-such-flag"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = gridcrew(dir.path(), &["--help"], &[]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    std::fs::write(dir.path().join("one.cases"), ONE_CASE).unwrap();
    let args = ["compare", "--scenario", "eight_node", "--cases", "one.cases", "--algorithms", "greedy", "--out", "blocker/cmp"];
    let o = gridcrew(dir.path(), &args, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn flags_beat_environment_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "[compare]\nbaseline_sims = 3\n").unwrap();
    let env = [("GRIDCREW_BASELINE_SIMS", "4")];
    assert_eq!(compare_m(d, &["--config", "run.toml", "--baseline-sims", "5"], &env), "5");
    assert_eq!(compare_m(d, &["--config", "run.toml"], &env), "4");
    assert_eq!(compare_m(d, &["--config", "run.toml"], &[]), "3");
    assert_eq!(compare_m(d, &[], &[("GRIDCREW_CONFIG", "run.toml")]), "3");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[compare]\nbaseline_simz = 3\n").unwrap();
    let o = gridcrew(dir.path(), &["--config", "run.toml", "compare", "--scenario", "eight_node"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("baseline_simz"), "{}", stderr(&o));
}

#[test]
fn compare_writes_documented_columns_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    compare_m(d, &["--baseline-sims", "4"], &[]);
    let (h, body) = rows(&d.join("cmp/compare.csv"));
    assert_eq!(h, ["case", "algorithm", "M", "seed", "outage_hours", "decisions", "ms_per_decision"]);
    assert_eq!(body.len(), 1);
    assert!(!body[0][6].is_empty());
    let (h, body) = rows(&d.join("cmp/summary.csv"));
    assert_eq!(h, ["case", "algorithm", "M", "runs", "mean_outage_hours", "mean_ms_per_decision"]);
    assert_eq!(body.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["only", "mean"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("cmp/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "compare");
    assert_eq!(m["seeds"], serde_json::json!([0]));
    assert_eq!(m["scenarios"], serde_json::json!(["eight_node"]));
}

#[test]
fn no_timing_leaves_timing_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    compare_m(d, &["--baseline-sims", "4"], &[("GRIDCREW_NO_TIMING", "1")]);
    let (h, body) = rows(&d.join("cmp/compare.csv"));
    assert_eq!(body[0][column(&h, "ms_per_decision")], "");
    let (h, body) = rows(&d.join("cmp/summary.csv"));
    assert!(body.iter().all(|r| r[column(&h, "mean_ms_per_decision")].is_empty()));
    // a falsey value keeps timing on
    compare_m(d, &["--baseline-sims", "4"], &[("GRIDCREW_NO_TIMING", "0")]);
    let (h, body) = rows(&d.join("cmp/compare.csv"));
    assert!(!body[0][column(&h, "ms_per_decision")].is_empty());
}

#[test]
fn train_then_evaluate_from_the_checkpoint_alone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("one.cases"), ONE_CASE).unwrap();
    let o = gridcrew(d, &["train", "--scenario", "eight_node", "--cases", "one.cases", "--episodes", "2", "--eval-every", "1", "--sims", "3", "--out", "t"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, body) = rows(&d.join("t/metrics.csv"));
    assert_eq!(h, ["episode", "train_steps", "eval_outage_hours", "value_loss", "policy_loss", "l2_loss", "buffer_size", "wall_s"]);
    assert_eq!(body.len(), 2);

    let o = gridcrew(d, &["evaluate", "--checkpoint", "t/final.ckpt", "--cases", "one.cases", "--sims", "3", "--seeds", "0,1", "--out", "eval.csv"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, body) = rows(&d.join("eval.csv"));
    assert_eq!(h, ["case", "seed", "calls", "damaged", "outage_hours", "decisions", "truncated", "trajectory", "ms_per_decision"]);
    assert_eq!(body.len(), 2);
    assert!(d.join("eval.csv.manifest.json").is_file());
}
