use std::f64::consts::PI;
use std::process::{Command, Output};

use relatedness::problems::builtin;

fn rd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rd")).args(args).env("RD_THREADS", "2").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_shows_the_catalog() {
    let o = rd(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["P1", "P2", "P3", "P4", "P5", "P6", "P7"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing from\n{text}");
    }
}

#[test]
fn run_writes_report_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rd(&["run", "P1", "--suite", "all", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("P1.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], true);
    assert_eq!(report["seed"], 0x4B52);

    let o = rd(&["report", out, "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "problem,pair,left,right,equal,min_residual");
    assert_eq!(csv.lines().count() - 1, report["duality"].as_array().unwrap().len());

    let o = rd(&["report", out, "--format", "svg"]);
    assert!(o.status.success());
    let certs: usize =
        report["duality"].as_array().unwrap().iter().map(|d| d["certificates"].as_array().unwrap().len()).sum();
    let svg = std::fs::read_to_string(dir.path().join("summary.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), certs);
}

#[test]
fn run_without_out_prints_json() {
    let o = rd(&["run", "P2", "--suite", "duality", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["duality"][0]["right"]["zeros"].as_array().unwrap().len(), 3);
}

#[test]
fn degree_subcommand() {
    let o = rd(&["degree", "P2", "--operator", "K2", "--domain", "box:-2..2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["degree"], 1);
    assert_eq!(r["zeros"].as_array().unwrap().len(), 3);

    let o = rd(&["degree", "P1", "--operator", "Keta", "--eta", "-1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["degree"], -1);

    let o = rd(&["degree", "P1", "--operator", "Keta"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("eta"));
}

#[test]
fn boundary_fixed_point_fails_the_run() {
    // the lower face of U2 passes through x*(0) = 1/(1 + 4 pi^2)
    let mut spec = builtin("P1").unwrap();
    spec.id = "P1-edge".into();
    spec.domains.u2_lo = vec![1.0 / (1.0 + 4.0 * PI * PI)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edge.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let o = rd(&["run", path.to_str().unwrap(), "--suite", "duality"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("diagnostic:"));
}

#[test]
fn bad_inputs_exit_with_errors() {
    let o = rd(&["run", "P99"]);
    assert_eq!(o.status.code(), Some(2));

    let mut doc = serde_json::to_value(builtin("P6").unwrap()).unwrap();
    doc["tau"] = serde_json::Value::from(2.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = rd(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau"), "{}", stderr(&o));

    let o = rd(&["run", "P1", "--seed", "0xZZ"]);
    assert!(!o.status.success());
}
