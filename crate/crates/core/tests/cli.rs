use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_onft");

fn small_config(dir: &Path, extra_runtime: &str) -> std::path::PathBuf {
    let path = dir.join("base.json");
    let text = format!(
        r#"{{
  "preset": "desk",
  "grid": {{ "extent_um": [2.0, 2.0, 4.0], "cell_um": 0.05 }},
  "scene": {{ "case": "onft_facet", "orientation": "radial", "k0a": 2.01 }},
  "layout": {{ "monitor_distance_um": 1.5, "top_clearance_um": 1.0, "box_clearance_cells": 3 }},
  "runtime": {{ "ramp_periods": 4, "window_periods": 4 {extra_runtime} }}
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn onft(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env("ONFT_WORKERS", "2").output().unwrap()
}

#[test]
fn modes_table() {
    let out = onft(&["modes", "--k0a", "4.39"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("family,l,m,n_eff,q_per_um"));
    assert!(lines.next().unwrap().starts_with("HE,1,1,"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"scene": {"case": "onf_surface", "orientation": "radial", "radius_um": 0.01}}"#).unwrap();
    let out = onft(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry unresolvable"));

    std::fs::write(&path, r#"{"scene": {"case": "onf_surface", "orientation": "sideways", "k0a": 1.0}}"#).unwrap();
    let out = onft(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene.orientation"));
}

#[test]
fn step_budget_exhaustion_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "max_steps": 200"#);
    let out = onft(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn analyze_quoted_rates() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("fl.csv");
    let bg = dir.path().join("bg.csv");
    std::fs::write(&counts, "t,c\n0,1200\n1,1424\n").unwrap();
    std::fs::write(&bg, "t,c\n0,300\n1,400\n").unwrap();
    let out = onft(&["analyze", "--counts", counts.to_str().unwrap(), "--background", bg.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["net"]["mean"], 962.0);
}

#[test]
fn sweep_writes_sorted_csv_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out_dir = dir.path().join("sweep");
    let args = [
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--var",
        "d_x",
        "--values=-0.1,0,0.1",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let first = onft(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv1 = std::fs::read(out_dir.join("results.csv")).unwrap();
    let text = String::from_utf8(csv1.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,orientation,k0a,radius_um,sweep_var,sweep_val_um,T,PF,eta,steps,wall_s,config_hash");
    assert_eq!(lines.len(), 4);
    let vals: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals, vec![-0.1, 0.0, 0.1]);
    // one shared normalization run
    assert_eq!(std::fs::read_dir(out_dir.join("vacuum")).unwrap().count(), 1);

    // the mirror-image points agree
    let eta: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(8).unwrap().parse().unwrap())
        .collect();
    assert!((eta[0] - eta[2]).abs() < 1e-3 * eta[0], "{eta:?}");

    let second = onft(&args);
    assert!(second.status.success());
    assert!(!String::from_utf8_lossy(&second.stderr).contains("failed"));
    assert_eq!(std::fs::read(out_dir.join("results.csv")).unwrap(), csv1);
}
