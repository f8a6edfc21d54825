use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn hetnet(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_stable_cycle_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("may_leonard.json");
    let o = hetnet(dir.path(), &["validate", cfg.to_str().unwrap(), "--lemma-samples", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mu="));
    let r = json(&dir.path().join("validate.json"));
    assert_eq!(r["provenance"]["command"], "validate");
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["status"] == "PASS"));
}

#[test]
fn validate_repelling_cycle_exits_one_and_names_h4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("may_leonard_unstable.json");
    let o = hetnet(dir.path(), &["validate", cfg.to_str().unwrap(), "--lemma-samples", "1000"]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&dir.path().join("validate.json"));
    let hyp = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "hypotheses").unwrap();
    assert_eq!(hyp["status"], "FAIL");
    assert!(hyp["detail"].as_str().unwrap().contains("H4"));
}

#[test]
fn unreadable_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"equilibria\": 3}").unwrap();
    let o = hetnet(dir.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let missing = dir.path().join("missing.json");
    assert_eq!(hetnet(dir.path(), &["measure", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn usage_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hetnet(dir.path(), &["frobnicate"]).status.code(), Some(4));
    assert_eq!(hetnet(dir.path(), &["verdict"]).status.code(), Some(4));
    let cfg = config("u2_network.json");
    let o = hetnet(dir.path(), &["measure", cfg.to_str().unwrap(), "--eps", "1.5", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn measure_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("u2_network.json");
    let o = hetnet(dir.path(), &["measure", cfg.to_str().unwrap(), "--node", "p1", "--delta", "0.02,0.01", "--samples", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# hetnet"));
    assert_eq!(lines[1], "node,eps,delta,ratio,half_width,bound,n,seed");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("p1,0.5,0.02,"));
    let r = json(&dir.path().join("measure.json"));
    assert_eq!(r["artifacts"][0], "measure.csv");
}

#[test]
fn measure_defaults_to_a_million_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("two_node_scalar.json");
    let o = hetnet(dir.path(), &["measure", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("measure.json"));
    assert_eq!(r["result"]["estimates"][0]["n_samples"], 1_000_000);
}

#[test]
fn flight_reports_exit_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = hetnet(dir.path(), &["flight", "--lambdas", "2,1", "--x", "0.01,0.02"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("flight.json"));
    let t = r["result"]["time"].as_f64().unwrap();
    let (a, b): (f64, f64) = (1e-4, 4e-4);
    let s = 2.0 / (b + (b * b + 4.0 * a).sqrt());
    assert!((t - s.ln() / 2.0).abs() < 1e-9);
}

#[test]
fn verdict_merges_one_network_and_refuses_two() {
    let dir = tempfile::tempdir().unwrap();
    let u2 = config("u2_network.json");
    let u2 = u2.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(hetnet(&a, &["validate", u2, "--lemma-samples", "2000"]).status.code(), Some(0));
    assert_eq!(hetnet(&a, &["measure", u2, "--samples", "20000"]).status.code(), Some(0));
    let out = hetnet(&a, &["verdict", a.join("validate.json").to_str().unwrap(), a.join("measure.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&a.join("verdict.json"));
    assert_eq!(v["verdict"]["verdict"], "INCONCLUSIVE");
    assert!(v["verdict"]["missing"].as_array().unwrap().iter().any(|m| m == "delta_scaling"));

    let scalar = config("two_node_scalar.json");
    assert_eq!(hetnet(&b, &["validate", scalar.to_str().unwrap(), "--lemma-samples", "1000"]).status.code(), Some(0));
    let out = hetnet(&b, &["verdict", a.join("validate.json").to_str().unwrap(), b.join("validate.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!b.join("verdict.json").exists());
}
