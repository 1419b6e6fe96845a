use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wavenet::chain::{chain_stable, ChainSpec, ChainVerdict, FluxSign};
use wavenet::{pi_tree_check, GraphSpec, Length, PiTreeVerdict};

const PI_TREE: &str = r#"{
  "variant": "tree",
  "vertices": [
    {"id": "r", "kind": "root"},
    {"id": "a", "kind": "interior_mass", "mass": 1.0},
    {"id": "b", "kind": "controlled"},
    {"id": "c", "kind": "controlled"}
  ],
  "edges": [
    {"id": "e1", "tail": "r", "head": "a", "length": 1.0},
    {"id": "e2", "tail": "a", "head": "b", "length": 2.0},
    {"id": "e3", "tail": "a", "head": "c", "length": 1.5}
  ]
}"#;

const NON_PI_CHAIN: &str = r#"{"lengths": [1, "pi"], "masses": [1]}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavenet")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files_on_disk(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect()
}

fn manifest_files(dir: &Path) -> BTreeSet<String> {
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect()
}

#[test]
fn check_on_pi_tree_exits_zero_with_verdict() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "tree.json", PI_TREE);
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--expect-stable"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pi_tree"]["is_pi_tree"], Value::Bool(true));
}

#[test]
fn malformed_config_exits_two_with_position() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\n  \"lengths\": [1, 2\n  \"masses\": [1]\n}");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:3:"), "{err}");
}

#[test]
fn unknown_subcommand_and_missing_file_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["check", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    assert_eq!(run(&["counterexample", "--variant", "circuit", "--length", "1/2"]).status.code(), Some(2));
}

#[test]
fn sweep_on_non_pi_chain_exits_one_when_stability_expected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "chain_pi.json", NON_PI_CHAIN);
    let args = ["sweep", "--config", cfg.to_str().unwrap(), "--stop", "3", "--step", "0.5"];
    let out = run(&[&args[..], &["--expect-stable"]].concat());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "unbounded");
    assert_eq!(run(&args).status.code(), Some(0));
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "tree.json", PI_TREE);
    let mut csv = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--T",
            "4",
            "--cells-per-unit-length",
            "16",
            "--out",
            dir.to_str().unwrap(),
            "--svg",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        csv.push(fs::read(dir.join("energy.csv")).unwrap());
        assert_eq!(files_on_disk(&dir), manifest_files(&dir));
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,E,D,R"));
    assert!(lines.next().unwrap().starts_with("0.000000000000e+00,"));
    let svg = fs::read_to_string(tmp.path().join("run0/energy.svg")).unwrap();
    assert!(svg.contains(">1e-") || svg.contains(">1e0<"));
}

#[test]
fn empty_spectrum_gives_header_only_csv_and_valid_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "tree.json", PI_TREE);
    let dir = tmp.path().join("out");
    // No eigenvalues lie to the right of the imaginary axis.
    let out =
        run(&["spectrum", "--config", cfg.to_str().unwrap(), "--box", "0.5,1,-5,5", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.join("spectrum.csv")).unwrap(), "re,im,residual,box_count\n");
    assert_eq!(files_on_disk(&dir), manifest_files(&dir));
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "spectrum");
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn verdicts_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "tree.json", PI_TREE);
    let dir = tmp.path().join("check");
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    let parsed: PiTreeVerdict = serde_json::from_value(saved["pi_tree"].clone()).unwrap();
    let spec: GraphSpec = serde_json::from_str(PI_TREE).unwrap();
    assert_eq!(parsed, pi_tree_check(&spec.build().unwrap(), 1e-9).unwrap());

    let chain = write(tmp.path(), "chain.json", r#"{"lengths": [1, "pi*1/2", 2.0344439357957027], "masses": [1, 4]}"#);
    let out = run(&["chain-check", "--config", chain.to_str().unwrap(), "--expect-stable"]);
    let parsed: ChainVerdict = serde_json::from_slice(&out.stdout).unwrap();
    let spec = ChainSpec::new(
        vec![Length::from_f64(1.0), Length::pi_times(1, 2), Length::from_f64(2.0344439357957027)],
        vec![1.0, 4.0],
    )
    .unwrap();
    let direct = chain_stable(&spec, 1e-9, FluxSign::Kirchhoff).unwrap();
    assert_eq!(parsed, direct);
    assert_eq!(out.status.code(), Some(if direct.stable { 0 } else { 1 }));
}

#[test]
fn counterexample_emits_probe_table() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("cex");
    let out = run(&[
        "counterexample",
        "--variant",
        "star",
        "--length",
        "sqrt(2)",
        "--probes",
        "6",
        "--shift",
        "unshifted",
        "--out",
        dir.to_str().unwrap(),
        "--expect-stable",
    ]);
    // Unshifted star probes grow, so stability is refuted.
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("probes.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "q_n,beta_n,b1_re,b1_im,ratio");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("1,"));

    let out = run(&["counterexample", "--variant", "circuit", "--length", "sqrt(2)", "--probes", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["eqcir_max_rel_diff"].as_f64().is_some());
    assert_eq!(v["asymptotic_checks"].as_array().unwrap().len(), 6);
}
