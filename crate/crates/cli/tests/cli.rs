use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sigspace::forms::Signature;
use sigspace::suite::sample_metric_field;
use tempfile::TempDir;

fn sigspace(args: &[&str], envs: &[(&str, &str)]) -> (i32, Value) {
    let output = Command::new(env!("CARGO_BIN_EXE_sigspace"))
        .args(args)
        .envs(envs.iter().copied())
        .output()
        .expect("binary should run");
    let stdout = String::from_utf8_lossy(&output.stdout);
    let json = serde_json::from_str(&stdout).unwrap_or_else(|e| {
        panic!(
            "stdout should be JSON ({e}): {stdout}\nstderr: {}",
            String::from_utf8_lossy(&output.stderr)
        )
    });
    (output.status.code().expect("exit code"), json)
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).expect("fixture should be written");
    path
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().expect("report is an object").remove("timing");
    v
}

const BUMP_CONFIG: &str = r#"{
  "domain": {"lower": [0.7, -0.3, 0.7], "upper": [1.3, 0.3, 1.3], "signature": [2, 0]},
  "integrand": {"kind": "bump", "center": [1.0, 0.0, 1.0], "radius": 0.3},
  "g": [[1.0, 0.4], [0.0, 1.2]]
}"#;

#[test]
fn signature_of_identity() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "id3.json", r#"{"n": 3, "entries": [[1,0,0],[0,1,0],[0,0,1]]}"#);
    let (code, v) = sigspace(&["signature", "--in", s(&f)], &[]);
    assert_eq!(code, 0);
    assert_eq!(v["signature"], serde_json::json!([3, 0]));
    assert_eq!(v["task"], "signature");
    assert_eq!(v["pass"], true);

    let (code, v) = sigspace(&["signature", "--in", s(&f), "--method", "minors"], &[]);
    assert_eq!(code, 0);
    assert_eq!(v["inputs"]["method"], "minors");
}

#[test]
fn density_of_scalar_form() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "form_n1_2.json", r#"{"n": 1, "entries": [[2.0]]}"#);
    let (code, v) = sigspace(&["density", "--in", s(&f)], &[]);
    assert_eq!(code, 0);
    assert_eq!(v["density"], 0.5);
    assert_eq!(v["checks"][0]["tolerance"], 1e-8);
}

#[test]
fn metric_at_identity() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "id2.json", r#"{"n": 2, "entries": [[1,0],[0,1]]}"#);
    let (code, v) = sigspace(&["metric", "--in", s(&f)], &[]);
    assert_eq!(code, 0);
    // packed order (1,1), (1,2), (2,2); the off-diagonal basis element is E12 + E21
    assert_eq!(v["Q"], serde_json::json!([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]));
    assert_eq!(v["alpha"], serde_json::json!([1.0, 0.0, 1.0]));
    assert_eq!(v["signature"], serde_json::json!([3, 0]));
    assert_eq!(v["qinv_alpha_alpha"], 2.0);

    // Q^a = Q + a·α⊗α has determinant det Q·(1 + 2a): negative below a = -1/2
    let (code, v) = sigspace(&["metric", "--in", s(&f), "--a", "-1"], &[]);
    assert_eq!(code, 0);
    assert_eq!(v["signature"], serde_json::json!([2, 1]));
}

#[test]
fn witness_carries_form() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"n": 2, "entries": [[4,0],[0,-1]]}"#);
    let b = write(&dir, "b.json", r#"{"n": 2, "entries": [[0,1],[1,0]]}"#);
    let (code, v) = sigspace(&["witness", "--from", s(&a), "--to", s(&b), "--positive-det"], &[]);
    assert_eq!(code, 0);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    let g: Vec<Vec<f64>> = serde_json::from_value(v["g"].clone()).unwrap();
    assert!(g[0][0] * g[1][1] - g[0][1] * g[1][0] > 0.0);

    let c = write(&dir, "c.json", r#"{"n": 2, "entries": [[1,0],[0,1]]}"#);
    let (code, v) = sigspace(&["witness", "--from", s(&a), "--to", s(&c)], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "SignatureMismatch");
}

#[test]
fn mc_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "experiment.json", BUMP_CONFIG);
    let args = ["mc", "--config", s(&cfg), "--seed", "7", "--samples", "20000"];
    let (code, first) = sigspace(&args, &[("SIGSPACE_THREADS", "1")]);
    assert_eq!(code, 0);
    let (_, second) = sigspace(&args, &[("SIGSPACE_THREADS", "4")]);
    let (_, third) = sigspace(&args, &[]);
    let first = without_timing(first);
    assert_eq!(first, without_timing(second));
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&without_timing(third)).unwrap()
    );
    assert_eq!(first["n_samples"], 20000);
    assert_eq!(first["acceptance_rate"], 1.0);
    assert!(first["std_error"].as_f64().unwrap() > 0.0);

    let (_, other) = sigspace(&["mc", "--config", s(&cfg), "--seed", "8", "--samples", "20000"], &[]);
    assert_ne!(first["estimate"], other["estimate"]);
}

#[test]
fn mc_writes_convergence_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "experiment.json", BUMP_CONFIG);
    let csv = dir.path().join("sweep.csv");
    let (code, v) = sigspace(
        &["mc", "--config", s(&cfg), "--seed", "3", "--samples", "16000", "--csv", s(&csv)],
        &[],
    );
    assert_eq!(code, 0);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n_samples,estimate,std_error,acceptance_rate");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2000,"));
    assert!(lines[4].starts_with("16000,"));
    // the full-size sweep entry is the headline estimate
    assert_eq!(v["sweep"][3]["estimate"], v["estimate"]);
}

#[test]
fn stochastic_tasks_need_seed_and_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "experiment.json", BUMP_CONFIG);
    let (code, v) = sigspace(&["mc", "--config", s(&cfg), "--samples", "5000"], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "MissingSeed");
    let (code, v) = sigspace(&["mc", "--config", s(&cfg), "--seed", "1"], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "MissingSamples");
}

#[test]
fn failed_contract_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "experiment.json", BUMP_CONFIG);
    let (code, v) = sigspace(
        &["mc", "--config", s(&cfg), "--seed", "1", "--samples", "5000", "--tol", "1e-12"],
        &[],
    );
    assert_eq!(code, 1);
    assert_eq!(v["pass"], false);
    assert_eq!(v["checks"][0]["passed"], false);
}

#[test]
fn malformed_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"n": 2, "entries": [[1, 2]"#);
    let (code, v) = sigspace(&["density", "--in", s(&bad)], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "Json");

    let asym = write(&dir, "asym.json", r#"{"n": 2, "entries": [[1, 2], [0, 1]]}"#);
    let (code, v) = sigspace(&["density", "--in", s(&asym)], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "Json");
    assert!(v["error"]["message"].as_str().unwrap().contains("symmetric"));

    let degenerate = write(&dir, "deg.json", r#"{"n": 2, "entries": [[1, 0], [0, 0]]}"#);
    let (code, v) = sigspace(&["signature", "--in", s(&degenerate)], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "DegenerateForm");

    let (code, v) = sigspace(&["density", "--in", s(&dir.path().join("missing.json"))], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "Io");

    let (code, v) = sigspace(&["frobnicate"], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "Usage");

    let (code, v) = sigspace(&["projective-demo", "--seed", "1"], &[("SIGSPACE_THREADS", "zero")]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "InvalidArgument");
}

#[test]
fn invariance_experiment_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "experiment.json", BUMP_CONFIG);
    let (code, v) = sigspace(&["invariance", "--config", s(&cfg), "--seed", "5", "--samples", "100000"], &[]);
    assert_eq!(code, 0, "{v}");
    assert!(v["sigmas"].as_f64().unwrap() < 3.0);
    assert_eq!(v["checks"][0]["tolerance"], 3.0);
}

#[test]
fn deform_writes_grid() {
    let dir = TempDir::new().unwrap();
    let grid = sample_metric_field(Signature::new(1, 1), 0.1).unwrap();
    let grid_path = dir.path().join("g.json");
    fs::write(&grid_path, serde_json::to_string(&grid).unwrap()).unwrap();
    let target = write(&dir, "t.json", r#"{"n": 2, "entries": [[2.0, 0.5], [0.5, -1.0]]}"#);
    let center = grid.origin().unwrap().to_string();
    let out = dir.path().join("g2.json");
    let (code, v) = sigspace(
        &["deform", "--grid", s(&grid_path), "--center", &center, "--target", s(&target), "--out", s(&out)],
        &[],
    );
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["exterior_changed"], 0);
    assert!(v["center_residual"].as_f64().unwrap() < 1e-9);

    let deformed: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(deformed["signature"], serde_json::json!([1, 1]));
    let points = deformed["points"].as_array().unwrap();
    assert_eq!(points.len(), grid.points.len());
    let c = points.iter().find(|p| p["id"] == grid.origin().unwrap()).unwrap();
    assert!((c["q"]["entries"][0][1].as_f64().unwrap() - 0.5).abs() < 1e-9);

    let (code, v) = sigspace(
        &["deform", "--grid", s(&grid_path), "--center", "999999", "--target", s(&target)],
        &[],
    );
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "PointNotInField");
}

#[test]
fn projective_demo_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let args = ["projective-demo", "--points", "3", "--dim", "2", "--seed", "1", "--rescale-c", "4", "--out", s(&out)];
    let (code, v) = sigspace(&args, &[]);
    assert_eq!(code, 0, "{v}");
    for key in ["ι homomorphism", "π–ι duality", "tower consistency", "pure-state net", "rescaling"] {
        assert!(v["residuals"][key].as_f64().unwrap() < 1e-12, "{key}");
    }
    let saved: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(saved, v);
    let (_, again) = sigspace(&args, &[]);
    assert_eq!(without_timing(again), without_timing(v));

    let (code, v) = sigspace(&["projective-demo", "--seed", "1", "--rescale-c", "-2"], &[]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "InvalidArgument");
    let (code, _) = sigspace(&["projective-demo", "--seed", "1", "--points", "9", "--dim", "3"], &[]);
    assert_eq!(code, 2);
}

#[test]
fn suite_passes() {
    let (code, v) = sigspace(&["suite", "--seed", "7"], &[]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["total"], 11);
    assert_eq!(v["passed"], 11);
    let criteria = v["criteria"].as_array().unwrap();
    assert!(criteria.iter().all(|c| c["passed"] == true && c.get("elapsed_s").is_none()));
    assert_eq!(v["timing"]["criteria_s"].as_object().unwrap().len(), 11);
}
