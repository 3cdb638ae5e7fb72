use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn tsnkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsnkit")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_with_levels_writes_a_report() {
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let out = tsnkit(&["analyze", path(&net), path(&flows), "--levels", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["config"]["level"], 2);
    assert_eq!(report["flows"].as_array().unwrap().len(), 4);
    let first = &report["flows"][0]["total"];
    assert!(first["us"].is_string() && first["num"].is_number() && first["den"].is_number());
}

#[test]
fn strict_flags_unschedulable_sets() {
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let np = tsnkit(&["analyze", path(&net), path(&flows), "--scheme", "non-preemptive", "--strict"]);
    assert_eq!(np.status.code(), Some(2));
    let ok = tsnkit(&["analyze", path(&net), path(&flows), "--levels", "1", "--strict"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn csv_output_to_file() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("report.csv");
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let out = tsnkit(&["analyze", path(&net), path(&flows), "--format", "csv", "--out", path(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("flow,hops_us,total_us,deadline_us,slack_us,verdict"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn config_file_is_checked() {
    let dir = TempDir::new().unwrap();
    let good = dir.path().join("good.json");
    let bad = dir.path().join("bad.json");
    std::fs::write(&good, r#"{"level": 1, "entries": [0, 0, 1, 1]}"#).unwrap();
    std::fs::write(&bad, r#"{"level": 2, "entries": [0, 2, 1, 1]}"#).unwrap();
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let out = tsnkit(&["analyze", path(&net), path(&flows), "--config-file", path(&good)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["config"]["entries"], serde_json::json!([0, 0, 1, 1]));
    let out = tsnkit(&["analyze", path(&net), path(&flows), "--config-file", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn synthesize_reports_level_and_counts() {
    let out = tsnkit(&["synthesize", path(&data("line.json")), path(&data("line_flows.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["outcome"], "found");
    assert_eq!(r["level"], 1);
    assert_eq!(r["levels"][0]["passed"], 0);
    assert!(r["levels"][1]["passed"].as_u64().unwrap() >= 1);
}

#[test]
fn generate_then_prioritize_then_analyze() {
    let dir = TempDir::new().unwrap();
    let net = data("star.json");
    let generated = dir.path().join("flows.json");
    let out = tsnkit(&["generate", path(&net), "--flows", "12", "--seed", "4", "--out", path(&generated)]);
    assert_eq!(out.status.code(), Some(0));
    let again = tsnkit(&["generate", path(&net), "--flows", "12", "--seed", "4"]);
    assert_eq!(std::fs::read(&generated).unwrap(), again.stdout);

    let prioritized = dir.path().join("prio.json");
    let out = tsnkit(&["prioritize", path(&net), path(&generated), "--seed", "1", "--flows-out", path(&prioritized)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["method"], "kmeans");
    assert_eq!(r["scores"].as_array().unwrap().len(), 8);

    let out = tsnkit(&["prioritize", path(&net), path(&generated), "--method", "dmpo", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["chosen_k"], 3);

    let out = tsnkit(&["analyze", path(&net), path(&prioritized), "--scheme", "fully-preemptive"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_reproducible_and_traces() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.ndjson");
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let args = ["simulate", path(&net), path(&flows), "--levels", "1", "--seed", "3"];
    let a = tsnkit(&args);
    let b = tsnkit(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut with_trace = args.to_vec();
    with_trace.extend(["--trace", path(&trace)]);
    assert_eq!(tsnkit(&with_trace).status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["time_ns"].is_number());
}

#[test]
fn validate_passes_on_a_sound_model() {
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let out = tsnkit(&["validate", path(&net), path(&flows), "--seed", "7", "--runs", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["safe"], true);
    assert_eq!(r["runs"].as_array().unwrap().len(), 20);
}

#[test]
fn usage_and_model_errors() {
    assert_eq!(tsnkit(&["analyze", "--frobnicate"]).status.code(), Some(64));
    assert_eq!(tsnkit(&["bogus"]).status.code(), Some(64));
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let both = tsnkit(&["analyze", path(&net), path(&flows), "--levels", "1", "--scheme", "non-preemptive"]);
    assert_eq!(both.status.code(), Some(64));
    let missing = tsnkit(&["analyze", path(&net), "/definitely/missing.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let short = tsnkit(&["simulate", path(&net), path(&flows), "--horizon-us", "100"]);
    assert_eq!(short.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_output() {
    let (net, flows) = (data("line.json"), data("line_flows.json"));
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_tsnkit"))
            .env("TSNKIT_THREADS", threads)
            .args(["validate", path(&net), path(&flows), "--runs", "6", "--seed", "2"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}
