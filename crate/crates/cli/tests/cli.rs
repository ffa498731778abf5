use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwell"))
        .args(args)
        .env("DWELL_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("artifact exists")).expect("valid JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("error is JSON")
}

#[test]
fn spectrum_writes_eigenvalues_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = dwell(&["spectrum", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let spectrum = read_json(&out.join("spectrum.json"));
    let w0 = spectrum["omega0"].as_f64().unwrap();
    let w1 = spectrum["omega1"].as_f64().unwrap();
    assert!((w0 - 0.1328).abs() < 5e-4, "{w0}");
    assert!((w1 - 0.1557).abs() < 5e-4, "{w1}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "spectrum");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let artifacts: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(artifacts, ["spectrum.json", "modes.csv"]);
    let modes = fs::read_to_string(out.join("modes.csv")).unwrap();
    assert_eq!(modes.lines().count(), 402);
}

#[test]
fn missing_config_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let res = dwell(&["spectrum", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_json(&res);
    assert_eq!(err["error"], "io");
    assert_eq!(err["path"], missing.to_str().unwrap());
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"s": 2.0, "mu_min": 1.0, "mu_max": 0.0}"#).unwrap();
    let res = dwell(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_json(&res);
    assert_eq!(err["error"], "config");
    let v = err["violations"].as_array().unwrap();
    assert_eq!(v.len(), 2, "{v:?}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.json");
    fs::write(&cfg, r#"{"sigma": 1.0}"#).unwrap();
    let res = dwell(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(stderr_json(&res)["path"], cfg.to_str().unwrap());
}

#[test]
fn unknown_preset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let res = dwell(&["spectrum", "--preset", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(stderr_json(&res)["error"], "unknown_preset");
}

#[test]
fn evolve_without_mu_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = dwell(&["evolve", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(stderr_json(&res)["error"], "usage");
}

#[test]
fn identical_inputs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = dwell(&[
            "evolve",
            "--preset",
            "dynamics-mu025",
            "--perturbation",
            "random",
            "--seed",
            "7",
            "--t-end",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for name in ["density.csv", "phase_plane.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn overlap_sweep_has_one_row_per_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = dwell(&["overlaps", "--sigma-min", "0.5", "--sigma-max", "2", "--sigma-step", "0.5", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let text = fs::read_to_string(out.join("overlaps.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    let th = read_json(&out.join("thresholds.json"));
    assert!((th["sigma_b"].as_f64().unwrap() - 2.96).abs() < 0.05);
}

#[test]
fn thermal_response_matches_convolution() {
    let dir = tempfile::tempdir().unwrap();
    let res = dwell(&["thermal", "--d", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success());
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["max_abs_difference"].as_f64().unwrap() < 1e-6);
}

#[test]
fn regress_list_names_every_preset() {
    let res = dwell(&["regress", "--list"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("sigma01-antisym ")));
    assert!(text.lines().count() >= 10);
}

#[test]
fn regress_single_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let res = dwell(&["regress", "--preset", "linear-spectrum", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report = read_json(&dir.path().join("regress.json"));
    assert_eq!(report[0]["status"], "PASS");
}

#[test]
fn regress_reports_failure_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let res = dwell(&["regress", "--preset", "twomode-sigma01", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("FAIL"));
}

#[test]
fn continue_then_stability_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let res = dwell(&[
        "continue",
        "--preset",
        "sigma1-sym",
        "--profiles",
        "--stability-stride",
        "0",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let states = read_json(&c.join("states_symmetric.json"));
    let pick = Value::Array(states.as_array().unwrap()[..3].to_vec());
    let path = dir.path().join("three.json");
    fs::write(&path, pick.to_string()).unwrap();
    let s = dir.path().join("s");
    let res = dwell(&[
        "stability",
        "--preset",
        "sigma1-sym",
        "--states",
        path.to_str().unwrap(),
        "--out",
        s.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(s.join("stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for line in csv.lines().skip(1) {
        assert!(line.contains(",symmetric,"));
    }
}
