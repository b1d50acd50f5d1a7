use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tar4c(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tar4c"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn tar4c")
}

fn sample_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples/sim_spec.json")
}

/// Simulated dataset with a cheap run config.
fn dataset(dir: &Path) -> PathBuf {
    let out = tar4c(&["simulate", sample_spec().to_str().unwrap(), "--out", "data"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("data/config.json");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "data/config.json");
    config
}

fn run_args<'a>(config: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["run", "--config", config, "--boot", "99", "--perms", "199", "--out", out]
}

#[test]
fn simulate_run_replay_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(tmp.path());
    let config = config.to_str().unwrap();

    let out = tar4c(&run_args(config, "res"), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = tmp.path().join("res");
    for f in ["edges.json", "graph.dot", "audit.json"] {
        assert!(res.join(f).is_file(), "{f} missing");
    }
    let dot = fs::read_to_string(res.join("graph.dot")).unwrap();
    assert!(dot.starts_with("digraph tar4c {"));
    let edges: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("edges.json")).unwrap()).unwrap();
    assert_eq!(edges["edges"].as_array().unwrap().len(), 2);
    assert_eq!(edges["meta"]["N"], 3);
    assert_eq!(edges["meta"]["D"], 3);

    let out = tar4c(&["replay", "res"], tmp.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: 2 edges reproduced"));

    let out = tar4c(&["compare", "res", "--perms", "199", "--out", "cmp"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("cmp/compare.json")).unwrap()).unwrap();
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 1);
    assert!(tmp.path().join("cmp/compare.dot").is_file());
}

#[test]
fn format_flag_limits_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(tmp.path());
    let mut args = run_args(config.to_str().unwrap(), "dot_only");
    args.extend(["--format", "dot"]);
    assert!(tar4c(&args, tmp.path()).status.success());
    let dir = tmp.path().join("dot_only");
    assert!(dir.join("graph.dot").is_file());
    assert!(!dir.join("edges.json").exists());
    assert!(dir.join("audit.json").is_file());

    let mut args = run_args(config.to_str().unwrap(), "x");
    args.extend(["--format", "svg"]);
    assert_eq!(tar4c(&args, tmp.path()).status.code(), Some(2));
}

#[test]
fn seed_override_changes_bootstrap_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(tmp.path());
    let c = config.to_str().unwrap();
    let mut a = run_args(c, "a");
    a.extend(["--seed", "1"]);
    let mut b = run_args(c, "b");
    b.extend(["--seed", "2"]);
    assert!(tar4c(&a, tmp.path()).status.success());
    assert!(tar4c(&b, tmp.path()).status.success());
    let read = |d: &str| fs::read(tmp.path().join(d).join("audit.json")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    // missing config file
    let out = tar4c(&["run", "--config", "nope.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    // malformed config
    fs::write(tmp.path().join("bad.json"), r#"{"subjects": [], "unknown_key": 1}"#).unwrap();
    assert_eq!(tar4c(&["run", "--config", "bad.json"], tmp.path()).status.code(), Some(2));

    // out-of-range alpha
    let config = dataset(tmp.path());
    let args = ["run", "--config", config.to_str().unwrap(), "--alpha", "1.5"];
    assert_eq!(tar4c(&args, tmp.path()).status.code(), Some(2));

    // recording with a non-numeric cell
    let csv = tmp.path().join("data/S001.csv");
    let text = fs::read_to_string(&csv).unwrap().replacen("\n", "\nabc,", 1);
    fs::write(&csv, text).unwrap();
    let args = run_args(config.to_str().unwrap(), "r");
    assert_eq!(tar4c(&args, tmp.path()).status.code(), Some(3));

    // replay of a directory without an audit log
    fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(tar4c(&["replay", "empty"], tmp.path()).status.code(), Some(3));
}

#[test]
fn replay_reports_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(tmp.path());
    assert!(tar4c(&run_args(config.to_str().unwrap(), "res"), tmp.path()).status.success());
    let edges = tmp.path().join("res/edges.json");
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&edges).unwrap()).unwrap();
    doc["edges"][0]["tci"] = serde_json::json!(99.5);
    fs::write(&edges, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = tar4c(&["replay", "res"], tmp.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(!out.stdout.is_empty());
}
