use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmc")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_json(dir: &Path, name: &str, v: Value) -> String {
    let path = dir.join(name);
    fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn bar(a0: f64, b0: f64, a1: f64, b1: f64, s2: f64) -> Value {
    json!({"kind": "bar", "alpha0": a0, "beta0": b0, "alpha1": a1, "beta1": b1, "sigma2": s2})
}

fn simulate(dir: &Path, model: Value, depth: u32, seed: u64, name: &str) -> String {
    let cfg = write_json(dir, &format!("{name}.sim.json"), json!({"model": model, "depth": depth, "name": name}));
    let out = bmc(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(format!("{name}.csv")).to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_the_whole_tree_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), bar(0.5, 1.0, 0.3, 1.5, 1.0), 3, 7, "a");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert_eq!(text.lines().next(), Some("node,value"));
    let b = simulate(dir.path(), bar(0.5, 1.0, 0.3, 1.5, 1.0), 3, 7, "b");
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn simulate_rejects_bad_depths_and_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "m.json", json!({"model": bar(0.5, 1.0, 0.3, 1.5, 1.0)}));
    assert_eq!(code(&bmc(&["simulate", "--config", &cfg, "--depth", "-1"])), 2);
    let bad = write_json(dir.path(), "bad.json", json!({"model": bar(0.5, 1.0, 0.3, 1.5, 1.0), "depth": -1}));
    assert_eq!(code(&bmc(&["simulate", "--config", &bad])), 2);
    let unknown = write_json(dir.path(), "u.json", json!({"model": bar(0.5, 1.0, 0.3, 1.5, 1.0), "depth": 2, "colour": 1}));
    assert_eq!(code(&bmc(&["simulate", "--config", &unknown])), 2);
    let unstable = write_json(dir.path(), "s.json", json!({"model": bar(1.5, 1.0, 0.3, 1.5, 1.0), "depth": 2}));
    assert_eq!(code(&bmc(&["simulate", "--config", &unstable])), 2);
}

fn estimate(file: &str, extra: &[&str]) -> (i32, Value, String) {
    let mut args = vec!["estimate", "--input", file];
    args.extend_from_slice(extra);
    let out = bmc(&args);
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let v = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (code(&out), v, String::from_utf8_lossy(&out.stderr).to_string())
}

#[test]
fn estimate_recovers_noise_free_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let model = json!({"kind": "bar", "alpha0": 0.5, "beta0": 1.0, "alpha1": -0.25, "beta1": 2.0, "sigma2": 0.0,
                       "initial": {"law": "point-mass", "x0": 0.7}});
    let file = simulate(dir.path(), model, 5, 1, "clean");
    let (c, v, err) = estimate(&file, &[]);
    assert_eq!(c, 0, "{err}");
    let theta: Vec<f64> = v["report"]["theta_hat"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (a, b) in theta.iter().zip([0.5, 1.0, -0.25, 2.0]) {
        assert!((a - b).abs() < 1e-10, "{theta:?}");
    }
    assert!(err.contains("effective config"));
}

#[test]
fn estimate_names_missing_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), bar(0.5, 1.0, 0.3, 1.5, 1.0), 3, 2, "holey");
    let text: String = fs::read_to_string(&file)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("7,"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&file, text).unwrap();
    let (c, _, err) = estimate(&file, &[]);
    assert_eq!(c, 3);
    assert!(err.contains("[7]"), "{err}");
}

#[test]
fn estimate_flags_degenerate_designs() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.csv");
    let text: String = std::iter::once("node,value\n".to_string())
        .chain((1..=15).map(|i| format!("{i},1.5\n")))
        .collect();
    fs::write(&file, text).unwrap();
    let (c, v, _) = estimate(file.to_str().unwrap(), &[]);
    assert_eq!(c, 4);
    assert_eq!(v["report"]["degenerate"], json!(true));
}

#[test]
fn estimate_rejects_bad_levels() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), bar(0.5, 1.0, 0.3, 1.5, 1.0), 3, 2, "t");
    assert_eq!(estimate(&file, &["--level", "1.5"]).0, 2);
}

#[test]
fn symmetric_data_is_rarely_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let runs = 40;
    let mut kept = 0;
    for seed in 0..runs {
        let file = simulate(dir.path(), bar(0.5, 1.0, 0.5, 1.0, 1.0), 11, seed, "sym");
        let (c, v, err) = estimate(&file, &["--level", "0.05"]);
        assert_eq!(c, 0, "{err}");
        if v["verdict"] == json!("fail to reject") {
            kept += 1;
        }
    }
    assert!(kept as f64 / runs as f64 >= 0.9, "{kept}/{runs}");
}

fn experiment(dir: &Path, v: Value, extra: &[&str]) -> (i32, String, String) {
    let cfg = write_json(dir, "exp.json", v);
    let mut args = vec!["experiment", "--config", &cfg, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = bmc(&args);
    (
        code(&out),
        String::from_utf8_lossy(&out.stdout).to_string(),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

#[test]
fn events_experiment_reports_three_over_32() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _, err) = experiment(dir.path(), json!({"name": "ev", "experiment": {"type": "events-exact", "depths": [2]}}), &[]);
    assert_eq!(c, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("ev.csv")).unwrap();
    assert!(csv.contains(",0.09375,"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ev.json")).unwrap()).unwrap();
    assert_eq!(summary["verdicts"]["e0_squared_is_3_32"], json!(true));
}

#[test]
fn moments_experiment_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _, _) = experiment(
        dir.path(),
        json!({"name": "mo", "experiment": {"type": "moments-exact", "depths": [2], "random_kernels": 5, "states": 2}}),
        &[],
    );
    assert_eq!(c, 0);
    let csv = fs::read_to_string(dir.path().join("mo.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.split(',').nth(5) == Some("true")));
}

#[test]
fn unknown_experiment_type_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _, _) = experiment(dir.path(), json!({"experiment": {"type": "warp-drive"}}), &[]);
    assert_eq!(c, 2);
}

#[test]
fn experiment_outputs_ignore_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "name": "dev",
        "model": bar(0.5, 1.0, 0.3, 1.5, 1.0),
        "functional": {"kind": "named", "name": "residual0"},
        "experiment": {"type": "deviation", "depths": [2, 3, 4], "replications": 500, "deltas": [0.5]},
    });
    let (c, _, err) = experiment(dir.path(), v.clone(), &["--workers", "1", "--seed", "5"]);
    assert_eq!(c, 0, "{err}");
    assert!(err.contains("\"seed\":5"), "{err}");
    let first = (
        fs::read(dir.path().join("dev.csv")).unwrap(),
        fs::read(dir.path().join("dev.json")).unwrap(),
    );
    let (c, _, _) = experiment(dir.path(), v, &["--workers", "3", "--seed", "5"]);
    assert_eq!(c, 0);
    assert_eq!(first.0, fs::read(dir.path().join("dev.csv")).unwrap());
    assert_eq!(first.1, fs::read(dir.path().join("dev.json")).unwrap());
}
