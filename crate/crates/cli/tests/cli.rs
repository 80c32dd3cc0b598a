use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmc")).args(args).env_remove("VMC_SEED").output().expect("vmc runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// Simulated data and a pooled fit, written into `dir`.
fn demo_inputs(dir: &Path) -> (String, String) {
    let obs = path(dir, "obs.csv");
    let bundle = path(dir, "bundle.json");
    let o = vmc(&["simulate", "--regions", "3", "--n-per-region", "30", "--seed", "5", "--out", &obs]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = vmc(&["fit", "--obs", &obs, "--out", &bundle, "--model", "pooled", "--draws", "120", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (obs, bundle)
}

#[test]
fn simulate_is_deterministic() {
    let a = vmc(&["simulate", "--regions", "3", "--seed", "7"]);
    let b = vmc(&["simulate", "--regions", "3", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("y,x,region"));
    assert_eq!(text.lines().count(), 1 + 3 * 60);
}

#[test]
fn quantities_lists_gaussian_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (_, bundle) = demo_inputs(dir.path());
    let o = vmc(&["quantities", "--bundle", &bundle]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "y\nmu\nsigma\nlog_sigma\n");
}

#[test]
fn quantities_usage_and_data_errors() {
    assert_eq!(code(&vmc(&["quantities"])), 1);
    assert_eq!(code(&vmc(&["quantities", "--bundle", "/nonexistent/bundle.json"])), 2);
    assert_eq!(code(&vmc(&[])), 1);
}

#[test]
fn compile_writes_valid_chart() {
    let dir = tempfile::tempdir().unwrap();
    let (obs, bundle) = demo_inputs(dir.path());
    let spec = path(dir.path(), "spec.json");
    fs::write(
        &spec,
        r#"{"draw":{"quantity":"y"},"model_layers":[{"mark":"densityline","policy":"individual"}],"obs_layers":[{"mark":"densityline"}]}"#,
    )
    .unwrap();
    let out = path(dir.path(), "chart.json");
    let o =
        vmc(&["compile", "--spec", &spec, "--bundle", &bundle, "--obs", &obs, "--out", &out, "--seed", "42", "--html"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(vmc_core::validate_output(&text).is_empty());
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["usermeta"]["seed"], 42);
    let html = fs::read_to_string(dir.path().join("chart.html")).unwrap();
    assert!(html.contains("\"usermeta\""));
}

#[test]
fn compile_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (obs, bundle) = demo_inputs(dir.path());
    let spec = path(dir.path(), "bad.json");
    fs::write(&spec, r#"{"model_layers":[{"mark":"densitee"}],"obs_layers":[{}]}"#).unwrap();
    let out = path(dir.path(), "chart.json");
    let o = vmc(&["compile", "--spec", &spec, "--bundle", &bundle, "--obs", &obs, "--out", &out]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.starts_with("ERROR /model_layers/0/mark "), "{err}");
    assert!(err.contains("densityline") && err.contains("lineribbon"), "{err}");
    assert!(!Path::new(&out).exists());

    let o = vmc(&["compile", "--spec", "/nonexistent.json", "--bundle", &bundle, "--obs", &obs, "--out", &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compile_reports_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let (obs, bundle) = demo_inputs(dir.path());
    let spec = path(dir.path(), "spec.json");
    fs::write(
        &spec,
        r#"{"draw":{"quantity":"sigma"},"obs_transform":"mean","model_layers":[{"mark":"densityline","policy":"collapse"}],"obs_layers":[{"mark":"point"}]}"#,
    )
    .unwrap();
    let out = path(dir.path(), "chart.json");
    let o = vmc(&["compile", "--spec", &spec, "--bundle", &bundle, "--obs", &obs, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("WARN "), "{}", stderr(&o));
}

#[test]
fn check_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "residual.json");
    let o = vmc(&["check", "--preset", "teaser_i", "--out", &out, "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["usermeta"]["layout"], "explicit:residual");

    let o = vmc(&["check", "--preset", "nope", "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("teaser_a") && stderr(&o).contains("expressiveness_c"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "a.json");
    let o = Command::new(env!("CARGO_BIN_EXE_vmc"))
        .args(["check", "--preset", "teaser_j", "--out", &out])
        .env("VMC_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["usermeta"]["seed"], 11);
}
