use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_seqgibbs"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&output.stdout).to_string() + &String::from_utf8_lossy(&output.stderr);
    (output.status.code().unwrap(), text)
}

/// A coin run small enough for a test: short window, coarse scan.
fn small_coin() -> Value {
    json!({
        "model": "coin",
        "window": 120,
        "stages": ["validate", "rpf", "decompose", "scan", "distribution", "verify", "sample"],
        "scan": {"T": 7.0, "n_max": 64, "grid": 0.01},
        "verify": {"n_grid": [40, 64, 100], "T0": 8},
        "sample": {"n": 32, "N": 20000, "seed": 7},
        "expect": {
            "classification": "Lattice",
            "span": 1.0,
            "variance": "Growing",
            "trends": {"lattice": ["Decreasing", "Small"]},
            "sample_pass": true
        }
    })
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn coin_run_passes_and_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_coin());
    let out = dir.path().join("out");
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 0, "{text}");
    for f in [
        "system.json",
        "rpf.json",
        "decomposition.json",
        "variance.json",
        "lattice.csv",
        "lattice.json",
        "charfn.csv",
        "pmf.csv",
        "llt.csv",
        "llt.json",
        "sample_check.csv",
        "sample_check.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let lattice: Value = serde_json::from_slice(&fs::read(out.join("lattice.json")).unwrap()).unwrap();
    let span = lattice["span_a"].as_f64().unwrap();
    assert!((span - 1.0).abs() < 1e-3, "span {span}");
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seeds"]["sample"], 7);
    assert!(m["config_sha256"].as_str().unwrap().len() == 64);
    assert!(m["timings_s"]["scan"].as_f64().unwrap() >= 0.0);
    assert!(m["assertions"].as_array().unwrap().iter().all(|a| a["pass"] == true));
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"model\": \"coin\", \"stages\": [").unwrap();
    let (code, text) = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 2);
    assert!(text.contains("bad.json"), "{text}");
}

#[test]
fn schema_violations_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &json!({"model": "nonexistent", "window": 40, "stages": ["rpf"]}));
    assert_eq!(run(&cfg, &out, &[]).0, 2);
    let cfg = write_config(dir.path(), &json!({"model": "coin", "window": 40, "stages": ["rpf"], "scna": {}}));
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 2);
    assert!(text.contains("scna"), "{text}");
    let cfg = write_config(dir.path(), &json!({"model": "coin", "window": 40, "stages": ["fit"]}));
    assert_eq!(run(&cfg, &out, &[]).0, 2);
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({"model": "coin", "window": 40, "stages": ["decompose"], "expect": {"variance": "Bounded"}}),
    );
    let out = dir.path().join("out");
    let (code, text) = run(&cfg, &out, &[]);
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("FAIL variance"), "{text}");
    assert_eq!(manifest(&out)["exit_code"], 1);
}

#[test]
fn non_convergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({"model": "random_chain:3,11", "window": 40, "stages": ["rpf"]}));
    let out = dir.path().join("out");
    let (code, text) = run(&cfg, &out, &["--override", "rpf.tol=1e-300", "--override", "rpf.k_cap=8"]);
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("stage rpf"), "{text}");
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 3);
    assert_eq!(m["effective_config"]["rpf"]["k_cap"], 8);
}

#[test]
fn overrides_change_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({"model": "coin", "window": 40, "stages": ["validate"]}));
    let out = dir.path().join("out");
    let (code, text) = run(&cfg, &out, &["--override", "model=golden_parry"]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(manifest(&out)["model"], "golden_parry");
    let (code, _) = run(&cfg, &out, &["--override", "window"]);
    assert_eq!(code, 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_coin();
    v["model"] = json!("random_chain:3,5");
    v["expect"] = json!({});
    v["sample"]["write_paths"] = json!(true);
    let cfg = write_config(dir.path(), &v);
    let files = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let (code, text) = run(&cfg, &out, &["--threads", threads]);
        assert_eq!(code, 0, "{text}");
        manifest(&out)["files"].clone()
    };
    let one = files("1", "one");
    let four = files("4", "four");
    let again = files("4", "again");
    assert!(one.as_array().unwrap().len() >= 12);
    assert_eq!(one, four);
    assert_eq!(four, again);
}
