use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bridge-lab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(sub: &str, config: &Path, out: &Path, threads: usize) -> i32 {
    bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

const AMSE: &str = r#"{
  "dist": {"kind": "point_mass", "atoms": [[1.0, 1.0]]},
  "q_grid": [1.0, 1.5, 2.0],
  "delta_grid": [1.5, 2.0],
  "sigma_w_grid": [0.1, 0.5]
}"#;

#[test]
fn amse_writes_ordered_rows_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "amse.json", AMSE);
    let out = dir.path().join("amse.csv");
    assert_eq!(run("amse", &cfg, &out, 2), 0);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["q", "delta", "sigma_w", "scaled", "sigma_bar", "chi_star", "amse", "iterations", "residual"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    assert_eq!((&rows[0][0], &rows[0][1], &rows[0][2]), ("1.0", "1.5", "0.1"));
    assert_eq!((&rows[11][0], &rows[11][1], &rows[11][2]), ("2.0", "2.0", "0.5"));
    let ridge: f64 = rows[11][6].parse().unwrap();
    assert!((ridge - 0.2807764064).abs() < 1e-8);

    let m = manifest(&out);
    assert_eq!(m["subcommand"], "amse");
    assert_eq!(m["threads"], 2);
    assert_eq!(m["rows"], 12);
    assert_eq!(m["failures"].as_array().unwrap().len(), 0);
    let echoed = serde_json::to_string(&m["config"]).unwrap();
    let reparsed = bridge_lab::config::ExperimentConfig::from_json(&echoed).unwrap();
    assert_eq!(reparsed, bridge_lab::config::ExperimentConfig::from_json(AMSE).unwrap());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "amse.json", AMSE);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(run("amse", &cfg, &a, 1), 0);
    assert_eq!(run("amse", &cfg, &b, 3), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn bad_config_exits_2_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", "{\n  \"dist\": {\"kind\": \"uniform\", \"theta\": 1},\n  \"q_grid\": [1.5,\n}");
    let out = dir.path().join("x.csv");
    let result = bin().args(["amse", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");

    let cfg = write_config(dir.path(), "range.json", r#"{"dist": {"kind": "uniform", "theta": 1}, "q_grid": [0.5], "delta_grid": [2], "sigma_w_grid": [0.1]}"#);
    let result = bin().args(["amse", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("q_grid"));
    assert!(!out.exists());
}

#[test]
fn failed_points_keep_partial_output() {
    let dir = TempDir::new().unwrap();
    // sigma_w = 0 is only defined above delta = 1
    let cfg = write_config(
        dir.path(),
        "partial.json",
        r#"{"dist": {"kind": "point_mass", "atoms": [[1.0, 1.0]]}, "q_grid": [2.0], "delta_grid": [0.5, 2.0], "sigma_w_grid": [0.0]}"#,
    );
    let out = dir.path().join("partial.csv");
    assert_eq!(run("amse", &cfg, &out, 1), 1);
    let rows = csv::Reader::from_path(&out).unwrap().records().count();
    assert_eq!(rows, 1);
    let m = manifest(&out);
    assert_eq!(m["failures"].as_array().unwrap().len(), 1);
    assert_eq!(m["failures"][0]["point"]["delta"], 0.5);
}

#[test]
fn expand_reports_validity() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "expand.json",
        r#"{"dist": {"kind": "power_zero", "ell": 0.3, "cap": 1.0}, "q_grid": [1.0, 1.5, 2.0], "delta_grid": [2.0], "sigma_w_grid": [0.05]}"#,
    );
    let out = dir.path().join("expand.csv");
    assert_eq!(run("expand", &cfg, &out, 1), 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&out).unwrap().records().map(|r| r.unwrap()).collect();
    let validity: Vec<&str> = rows.iter().map(|r| r.get(5).unwrap()).collect();
    assert_eq!(validity, ["lasso-bracket-only", "inapplicable", "valid"]);
}

#[test]
fn qstar_prints_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", r#"{"dist": {"kind": "uniform", "theta": 1}, "qstar": {"points": 50}}"#);
    let out = dir.path().join("q.csv");
    let result = bin().args(["qstar", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(result.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&result.stdout).trim(), "q_star=2.000");
    assert_eq!(csv::Reader::from_path(&out).unwrap().records().count(), 50);
    assert_eq!(manifest(&out)["summary"]["q_star"], 2.0);
}

#[test]
fn mc_small_instance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.json",
        r#"{"dist": {"kind": "point_mass", "atoms": [[1.0, 1.0]]}, "q_grid": [1.0, 2.0], "sigma_w_grid": [0.5],
            "lambda_grid": [0.01, 0.1, 1.0], "mc": {"n": 200, "p": 100, "seeds": [1, 2]}}"#,
    );
    let out = dir.path().join("mc.csv");
    assert_eq!(run("mc", &cfg, &out, 1), 0);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["seed", "n", "p", "q", "lambda", "iterations", "grad_norm", "mse", "se_amse", "rel_err"]
    );
    assert_eq!(reader.records().count(), 2 * 2 * 3);
    let summary = manifest(&out)["summary"].clone();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert_eq!(summary[0]["seeds"], 2);
}

#[test]
fn phase_uses_smallest_noise() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "phase.json",
        r#"{"dist": {"kind": "point_mass", "atoms": [[1.0, 1.0]]}, "q_grid": [1.5], "delta_grid": [0.5, 2.0], "sigma_w_grid": [0.1, 1e-4]}"#,
    );
    let out = dir.path().join("phase.csv");
    assert_eq!(run("phase", &cfg, &out, 1), 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&out).unwrap().records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let low: f64 = rows[0][6].parse().unwrap();
    let high: f64 = rows[1][6].parse().unwrap();
    assert!(low >= 1e-2 && high <= 1e-6, "{low} {high}");
}

#[test]
fn prox_selftest_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("selftest.csv");
    let status = bin().args(["prox-selftest", "--points", "2000", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(manifest(&out)["failures"].as_array().unwrap().len(), 0);
}
