//! End-to-end runs of the `rwp` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robust_wasserstein::io::{read_measure, write_measure};
use robust_wasserstein::DiscreteMeasure;
use tempfile::TempDir;

fn rwp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwp")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn line(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
}

fn save(dir: &TempDir, name: &str, m: &DiscreteMeasure) -> PathBuf {
    let path = dir.path().join(name);
    write_measure(&path, m).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// μ̃ = 0.8 δ0 + 0.2 δ50 and ν̃ = 0.8 δ1 + 0.2 δ−50.
fn outlier_pair(dir: &TempDir) -> (PathBuf, PathBuf) {
    (save(dir, "a.json", &line(&[0.0, 50.0], &[0.8, 0.2])), save(dir, "b.json", &line(&[1.0, -50.0], &[0.8, 0.2])))
}

#[test]
fn robust_removes_the_outliers() {
    let dir = TempDir::new().unwrap();
    let (a, b) = outlier_pair(&dir);
    let v = json(&rwp(&["robust", s(&a), s(&b), "--eps", "0.2"]));
    assert_eq!(v["value"].as_f64().unwrap(), 0.8);
    assert_eq!(v["removed_mu"]["mass"].as_f64().unwrap(), 0.2);
    let v = json(&rwp(&["robust", s(&a), s(&b), "--eps", "0.2", "--method", "sinkhorn", "--reg", "0.001"]));
    assert!((v["value"].as_f64().unwrap() - 0.8).abs() < 0.008);
    let v = json(&rwp(&["robust", s(&a), s(&b), "--eps-mu", "0.2", "--eps-nu", "0.2"]));
    assert!((v["value"].as_f64().unwrap() - 0.8 * 0.8).abs() < 1e-12);
}

#[test]
fn distance_to_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let (a, _) = outlier_pair(&dir);
    assert_eq!(json(&rwp(&["dist", s(&a), s(&a), "--p", "2"]))["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn sweep_csv_and_json() {
    let dir = TempDir::new().unwrap();
    let (a, b) = outlier_pair(&dir);
    let out = rwp(&["sweep", s(&a), s(&b), "--grid", "0:0.3:0.1"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,value_p,slope");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with(','));
    let v = json(&rwp(&["sweep", s(&a), s(&b), "--grid", "0:0.3:0.1", "--format", "json"]));
    assert_eq!(v["taus"].as_array().unwrap().len(), 4);
    assert!((v["elbow"]["eps_hat"].as_f64().unwrap() - 0.2).abs() < 1e-12, "{v}");
    let v = json(&rwp(&["sweep", s(&a), s(&b), "--grid", "0:0.2:0.1", "--format", "json"]));
    assert!(v["elbow"].get("error").is_some(), "three radii are too few for an elbow");
}

#[test]
fn output_file_round_trips_through_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, "w,x,y\n0.25,0,1\n0.75,2,3.5\n").unwrap();
    let m = read_measure(&csv).unwrap();
    let copy = save(&dir, "m.json", &m);
    assert_eq!(read_measure(&copy).unwrap(), m);
    let out_path = dir.path().join("out.json");
    let out = rwp(&["dist", s(&csv), s(&copy), "-o", s(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (a, b) = outlier_pair(&dir);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"points\": [[0.0]],\n \"weights\": [1.0,]}").unwrap();
    let out = rwp(&["dist", s(&bad), s(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "1,0\n0.5,nan\n").unwrap();
    let out = rwp(&["dist", s(&bad_csv), s(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("column 2"));

    assert_eq!(rwp(&["robust", s(&a), s(&b), "--eps", "1.5"]).status.code(), Some(2));
    assert_eq!(rwp(&["robust", s(&a), s(&b)]).status.code(), Some(2));
    assert_eq!(rwp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rwp(&["bench", "--suite", "nope"]).status.code(), Some(2));
    let out = rwp(&["robust", s(&a), s(&b), "--eps", "0.1", "--method", "sinkhorn", "--reg", "1e-4", "--max-iters", "3"]);
    assert_eq!(out.status.code(), Some(1));
    // Certificates are refused at and beyond the breakdown point.
    let out = rwp(&["robust", s(&a), s(&b), "--eps", "0.4", "--sigma", "1", "--q", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tests_and_estimators() {
    let dir = TempDir::new().unwrap();
    let (a, b) = outlier_pair(&dir);
    let v = json(&rwp(&["test2s", s(&a), s(&b), "--eps", "0.2", "--rho", "0.5"]));
    assert_eq!(v["decision"], "accept");
    let v = json(&rwp(&["test2s", s(&a), s(&b), "--eps", "0.0", "--rho", "0.5"]));
    assert_eq!(v["decision"], "reject");

    let pairs = dir.path().join("pairs.csv");
    let rows: String = (0..40).map(|i| { let x = (i % 2) as f64 * 10.0; format!("0.025,{x},{x}\n") }).collect();
    std::fs::write(&pairs, rows).unwrap();
    let v = json(&rwp(&["testindep", s(&pairs), "--split", "1", "--eps", "0.1", "--rho", "0.5"]));
    assert_eq!(v["decision"], "reject");
    assert_eq!(rwp(&["testindep", s(&pairs), "--split", "1", "--eps", "0.1", "--rho", "0.5", "--cap", "2"]).status.code(), Some(1));
    let v = json(&rwp(&["testindep", s(&pairs), "--split", "1", "--eps", "0.1", "--rho", "0.5", "--cap", "2", "--subsample"]));
    assert!(v["statistic"].is_number());

    let template = save(&dir, "t.json", &line(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25]));
    let data = save(&dir, "d.json", &line(&[1.0, 2.0, 3.0, 40.0], &[0.225, 0.45, 0.225, 0.1]));
    let v = json(&rwp(&["mde", s(&data), "--eps", "0.1", "--location", s(&template), "--grid", "-2:4:0.5"]));
    assert_eq!(v["params"][0].as_f64().unwrap(), 2.0);
    assert_eq!(v["family_size"], 13);

    let v = json(&rwp(&["sliced", s(&a), s(&b), "--sliced", "max"]));
    assert!((v["value"].as_f64().unwrap() - json(&rwp(&["dist", s(&a), s(&b)]))["value"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn bench_passes() {
    let out = rwp(&["bench"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().filter(|l| l.ends_with("pass")).count(), 5);
}
