use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn residkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_residkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn n01() -> &'static str {
    r#"{"kind":"normal","params":{"mu":0,"sigma":1}}"#
}

#[test]
fn residuals_identity_chain() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), "unit_id,y\na,0\nb,1.96\nc,-1.96\n").unwrap();
    let map = format!(r#"{{"a":{0},"b":{0},"c":{0}}}"#, n01());
    fs::write(dir.path().join("d.json"), map).unwrap();
    let out = residkit(&["residuals", "--obs", "obs.csv", "--dists", "d.json", "--out-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("o/residuals.csv")).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let r_ddag: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    for (got, want) in r_ddag.iter().zip([0.0, 1.96, -1.96]) {
        assert!((got - want).abs() < 1e-9);
    }
    let manifest = json(&dir.path().join("o/manifest.json"));
    assert_eq!(manifest["command"], "residuals");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest.get("threads").is_none());
}

#[test]
fn residuals_from_draws_and_missing_unit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), "unit_id,y\nu1,0.4\nu2,0.9\nu3,0.1\n").unwrap();
    let mut draws = String::from("unit_id,draw\n");
    for i in 0..1000 {
        draws.push_str(&format!("u1,{}\nu2,{}\n", (i as f64 + 0.5) / 1000.0, ((i * 7) % 1000) as f64 / 999.0));
    }
    fs::write(dir.path().join("draws.csv"), draws).unwrap();
    let out = residkit(
        &["residuals", "--obs", "obs.csv", "--dists", "draws.csv", "--out-dir", "o", "--format", "json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let recs = json(&dir.path().join("o/residuals.json"));
    for r in recs.as_array().unwrap() {
        let p = r["percentile"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    let summary = json(&dir.path().join("o/summary.json"));
    assert_eq!(summary["n_errors"], 1);
    assert_eq!(summary["errors"][0]["unit_id"], "u3");
}

#[test]
fn malformed_input_is_fatal_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), "unit_id,y\na,1\nb,oops\n").unwrap();
    fs::write(dir.path().join("d.json"), format!(r#"{{"a":{}}}"#, n01())).unwrap();
    let out = residkit(&["residuals", "--obs", "obs.csv", "--dists", "d.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = residkit(&["residuals", "--obs", "missing.csv", "--dists", "d.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn calibrate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = residkit(&["calibrate", "--d", n01(), "--out-dir", "g"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&dir.path().join("g/report.json"));
    assert_eq!(rep["classification"], "Exact");
    assert!((rep["effective_alpha"].as_f64().unwrap() - 0.05).abs() < 1e-12);

    fs::write(dir.path().join("exp.json"), r#"{"kind":"exponential","params":{"rate":1}}"#).unwrap();
    let out = residkit(&["calibrate", "--d", "exp.json", "--side", "right", "--out-dir", "e"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&dir.path().join("e/report.json"));
    assert!((rep["effective_alpha"].as_f64().unwrap() - 0.0710157478).abs() < 1e-9);
    assert!((rep["calibrated_alpha"].as_f64().unwrap() - 0.02298153609).abs() < 1e-9);
    assert_eq!(json(&dir.path().join("e/manifest.json"))["inputs"][0]["path"], "exp.json");

    let unif = r#"{"kind":"uniform","params":{"lo":0,"hi":1}}"#;
    let out = residkit(&["calibrate", "--d", unif, "--side", "two", "--out-dir", "u"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&dir.path().join("u/report.json"));
    assert!(rep["root_residual"].as_f64().unwrap().abs() < 1e-10);

    let pm = r#"{"kind":"point_mass","params":{"c":1}}"#;
    let out = residkit(&["calibrate", "--d", pm, "--out-dir", "p"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));

    let out = residkit(&["calibrate", "--d", n01(), "--side", "two", "--alpha", "0.7"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn power_command() {
    let dir = tempfile::tempdir().unwrap();
    let f = r#"{"kind":"exponential","params":{"rate":2}}"#;
    let d = r#"{"kind":"exponential","params":{"rate":1}}"#;
    let out = residkit(&["power", "--f", f, "--d", d, "--out-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&dir.path().join("power.json"));
    assert!((rep["pow_ddag"].as_f64().unwrap() - 0.0025).abs() < 1e-12);
}

#[test]
fn diagnose_writes_report_and_panels() {
    let dir = tempfile::tempdir().unwrap();
    let mut obs = String::from("unit_id,y\n");
    let mut map = Vec::new();
    for i in 0..40 {
        obs.push_str(&format!("u{i},{}\n", (i as f64 - 19.5) / 10.0));
        map.push(format!(r#""u{i}":{}"#, n01()));
    }
    fs::write(dir.path().join("obs.csv"), obs).unwrap();
    fs::write(dir.path().join("d.json"), format!("{{{}}}", map.join(","))).unwrap();
    let out = residkit(&["residuals", "--obs", "obs.csv", "--dists", "d.json", "--out-dir", "r"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out = residkit(
        &["diagnose", "--residuals", "r/residuals.csv", "--correction", "bh", "--side", "two", "--out-dir", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("x/diagnostics.json"));
    assert_eq!(rep["n_units"], 40);
    assert_eq!(rep["correction"], "BH");
    for f in ["qq.csv", "density.csv", "ecdf.csv"] {
        assert!(dir.path().join("x").join(f).is_file(), "{f}");
    }
}

fn small_config(dir: &Path) {
    fs::write(
        dir.join("cfg.json"),
        r#"{"n_iter": 400, "n_burnin": 200, "sample_size_N": 40, "K": 1000, "n_replications": 2}"#,
    )
    .unwrap();
}

#[test]
fn simulate_file_contract() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = residkit(
        &["simulate", "--config", "cfg.json", "--replications", "1", "--seed", "5", "--out-dir", "s"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let study = fs::read_to_string(dir.path().join("s/study.csv")).unwrap();
    assert_eq!(study.lines().count(), 3);
    for h in ["null", "alternative"] {
        for kind in ["qq", "density", "ecdf"] {
            for which in ["star", "ddag"] {
                let p = dir.path().join(format!("s/figure/{h}/{kind}_{which}.csv"));
                assert!(p.is_file(), "{}", p.display());
            }
        }
        let qq = fs::read_to_string(dir.path().join(format!("s/figure/{h}/qq_ddag.csv"))).unwrap();
        assert_eq!(qq.lines().count(), 1001);
    }
    let m = json(&dir.path().join("s/manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["options"]["config"]["n_replications"], 1);

    let out = residkit(&["simulate", "--config", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    fs::write(dir.path().join("bad.json"), r#"{"n_iter": 10, "n_burnin": 20}"#).unwrap();
    let out = residkit(&["simulate", "--config", "bad.json", "--out-dir", "b"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
