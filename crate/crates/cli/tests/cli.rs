use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn doa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doa"))
        .args(args)
        .output()
        .expect("spawn doa")
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = doa(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_then_estimate_recovers_a_single_source() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(dir.path(), "x.json", &["--m", "8", "--doas", "0.7"]);
    let rep = path(dir.path(), "r.json");
    let o = doa(&["estimate", "--input", s(&x), "--method", "classo", "--n", "1", "--out", s(&rep)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&rep);
    assert_eq!(v["status"], "Converged");
    let d = v["doas"][0].as_f64().unwrap();
    assert!((d - 0.7).abs() < 1e-9, "{d}");
}

#[test]
fn classo_h_records_the_default_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(
        dir.path(),
        "x.json",
        &["--doas", "-0.4,0.4", "--amp", "1,0", "--amp", "0,0.7", "--snr", "20", "--seed", "5"],
    );
    let o = doa(&["estimate", "--input", s(&x), "--method", "classo_h", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mu"].as_f64(), Some(0.8));
    assert_eq!(v["method"], "classo_h");
}

#[test]
fn missing_input_fails_without_writing_output() {
    let dir = tempfile::tempdir().unwrap();
    let rep = path(dir.path(), "r.json");
    let o = doa(&["estimate", "--input", s(&path(dir.path(), "nope.json")), "--out", s(&rep)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!rep.exists());
    assert!(!o.stderr.is_empty());
}

#[test]
fn method_specific_flags_are_rejected_elsewhere() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(dir.path(), "x.json", &["--doas", "0.1"]);
    let o = doa(&["estimate", "--input", s(&x), "--method", "classo", "--mu", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = doa(&["estimate", "--input", s(&x), "--method", "relax", "--grid-size", "512"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn too_high_model_order_is_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(dir.path(), "x.json", &["--m", "6", "--doas", "0.5,0.5"]);
    let o = doa(&["estimate", "--input", s(&x), "--n", "2"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "Undefined");
}

#[test]
fn bench_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "fig3.csv");
    let svg = path(dir.path(), "fig3.svg");
    let o = doa(&["bench", "--scenario", "fig3", "--trials", "2", "--out", s(&csv), "--plot", s(&svg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 9 * 2);
    assert!(rows.iter().any(|r| r.contains(",classo_h,")));
    assert!(rows.iter().any(|r| r.contains(",relax,")));
    let plot = std::fs::read_to_string(&svg).unwrap();
    assert!(plot.starts_with("<svg"));
    assert_eq!(plot.matches("<polyline").count(), 2);
}

#[test]
fn bench_rejects_unknown_scenarios() {
    let o = doa(&["bench", "--scenario", "fig9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig1"));
}

#[test]
fn audit_accepts_l1_reports_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(
        dir.path(),
        "x.json",
        &["--doas", "-0.5,0.6", "--snr", "15", "--seed", "11"],
    );
    let rep = path(dir.path(), "r.json");
    let o = doa(&["estimate", "--input", s(&x), "--n", "2", "--out", s(&rep)]);
    assert_eq!(o.status.code(), Some(0));
    let o = doa(&["audit", "--report", s(&rep), "--input", s(&x)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));

    let mut v = read_json(&rep);
    let d = v["doas"][0].as_f64().unwrap();
    v["doas"][0] = (d + 0.01).into();
    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, serde_json::to_vec(&v).unwrap()).unwrap();
    let o = doa(&["audit", "--report", s(&bad), "--input", s(&x)]);
    assert_ne!(o.status.code(), Some(0));

    let ml = path(dir.path(), "ml.json");
    let o = doa(&["estimate", "--input", s(&x), "--n", "2", "--method", "ml", "--out", s(&ml)]);
    assert_eq!(o.status.code(), Some(0));
    let o = doa(&["audit", "--report", s(&ml), "--input", s(&x)]);
    assert_eq!(o.status.code(), Some(1));
}
