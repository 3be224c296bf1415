use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn threatcrawl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_threatcrawl")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let output = threatcrawl(&["simulate", "--fixture", "standard", "--steps", "40", "--out", &out]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in ["events.jsonl", "report.json", "checkpoint.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 40);
    let lines = fs::read_to_string(dir.path().join("events.jsonl")).unwrap().lines().count();
    assert!(lines > 40, "discovery events precede the crawl steps");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"seeds": ["http://example.org/"], "max_stpes": 10}"#).unwrap();
    let output = threatcrawl(&["crawl", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("max_stpes"));
}

#[test]
fn keyword_arm_without_search_service_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seeds": ["http://example.org/"], "actions_enabled": "FK"}"#).unwrap();
    let output = threatcrawl(&["crawl", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_2() {
    let output = threatcrawl(&["resume", "/nonexistent/checkpoint.json"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn halted_run_resumes_to_identical_outputs() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let run = |dir: &Path, extra: &[&str]| {
        let out = out_arg(dir);
        let mut args = vec!["simulate", "--steps", "80", "--out", &out];
        args.extend_from_slice(extra);
        threatcrawl(&args)
    };
    assert!(run(full.path(), &[]).status.success());
    let halted = run(split.path(), &["--halt-after", "35"]);
    assert_eq!(halted.status.code(), Some(130));
    let checkpoint = split.path().join("checkpoint.json");
    let resumed = threatcrawl(&["resume", checkpoint.to_str().unwrap()]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    for name in ["events.jsonl", "report.json"] {
        let a = fs::read(full.path().join(name)).unwrap();
        let b = fs::read(split.path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn report_rebuilds_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert!(threatcrawl(&["simulate", "--steps", "25", "--actions", "FK", "--out", &out]).status.success());
    let events = dir.path().join("events.jsonl");
    let output = threatcrawl(&["report", events.to_str().unwrap(), "--json"]);
    assert!(output.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, written);

    let table = threatcrawl(&["report", events.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("TC_FK"));
}

#[test]
fn params_override_the_fixture_web() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let params = r#"{"n_clusters": 2, "relevant_clusters": 1, "pages_per_cluster": 30}"#;
    let output = threatcrawl(&["simulate", "--params", params, "--steps", "10", "--out", &out]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let bad = threatcrawl(&["simulate", "--params", r#"{"n_clusters": 0}"#, "--out", &out]);
    assert_eq!(bad.status.code(), Some(2));
}
