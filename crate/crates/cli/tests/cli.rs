use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hysim"))
        .args(args)
        .env("HYSIM_THREADS", "2")
        .output()
        .expect("spawn hysim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_system_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&["simulate", "--system", "nope", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("oscillator-ex1"), "{err}");
}

#[test]
fn nonpositive_eps_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&["simulate", "--system", "oscillator-ex1", "--eps", "0", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps"));
}

#[test]
fn missing_system_source_is_a_usage_error() {
    assert_eq!(code(&hysim(&["simulate"])), 1);
    assert_eq!(code(&hysim(&["simulate", "--system", "toy-two-interval", "--system-file", "x.json"])), 1);
}

#[test]
fn help_exits_cleanly() {
    let out = hysim(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verify-nav"));
}

#[test]
fn malformed_system_file_is_an_error() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{ not json").unwrap();
    let out = hysim(&["simulate", "--system-file", path_str(&file), "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_thread_count_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_hysim"))
        .args(["verify-nav", "--instance", "nav-a", "--samples", "1"])
        .env("HYSIM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn system_file_simulation_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("ball.json");
    fs::write(
        &file,
        r#"{
            "name": "ball",
            "modes": [{
                "name": "air", "dim": 2, "bbox": [[-10, 0], [-20, 20]], "convex": true,
                "constraints": [{"kind": "upper", "index": 0, "bound": 0}],
                "field": {"kind": "linear", "a": [[0, 1], [0, 0]], "b": [0, 0]}
            }],
            "edges": [{
                "source": 0, "target": 0, "constraint": 0,
                "activation": {"kind": "coord_nonneg", "index": 1},
                "reset": {"kind": "impact", "index": 1, "restitution": 1.0}
            }],
            "initial_state": [-1, 1]
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = hysim(&[
        "simulate",
        "--system-file",
        path_str(&file),
        "--h",
        "0.01",
        "--T",
        "3",
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&out_dir.join("result.json"));
    assert_eq!(result["termination"]["kind"], "horizon-reached");
    assert_eq!(result["stats"]["transitions"], 1);
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn zeno_budget_exhaustion_reports_not_completed() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&[
        "simulate",
        "--system",
        "oscillator-zeno",
        "--h",
        "5e-4",
        "--eps",
        "1e-5",
        "--max-transitions",
        "20",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 4);
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["termination"]["kind"], "zeno-suspected");
    let t = result["zeno"]["time"].as_f64().unwrap();
    assert!((t - 5.0345).abs() < 0.05, "{t}");
}

#[test]
fn nav_verdicts_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let a = hysim(&["verify-nav", "--instance", "nav-a", "--samples", "20", "--out", path_str(&dir.path().join("a"))]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let report = read_json(&dir.path().join("a/report.json"));
    assert_eq!(report["verdict"]["verdict"], "verified");

    let b = hysim(&["verify-nav", "--instance", "nav-b", "--samples", "20", "--out", path_str(&dir.path().join("b"))]);
    assert_eq!(code(&b), 3, "{}", String::from_utf8_lossy(&b.stderr));
}

#[test]
fn unknown_nav_instance_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&["verify-nav", "--instance", "nav-z", "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn rerun_reproduces_trajectory_bytes() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let out = hysim(&[
        "simulate",
        "--system",
        "oscillator-ex1",
        "--h",
        "1e-2",
        "--T",
        "4",
        "--out",
        path_str(&first),
    ]);
    assert_eq!(code(&out), 0);
    let manifest = read_json(&first.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == "trajectory.csv"));

    let second = dir.path().join("second");
    let out = hysim(&["rerun", path_str(&first.join("manifest.json")), "--out", path_str(&second)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(second.join("trajectory.csv")).unwrap()
    );
    assert_eq!(
        fs::read(first.join("result.json")).unwrap(),
        fs::read(second.join("result.json")).unwrap()
    );
}

#[test]
fn rerun_of_unknown_command_fails() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(
        &m,
        r#"{"command": "launch", "parameters": {}, "tool_version": "0.0.0", "outputs": []}"#,
    )
    .unwrap();
    assert_eq!(code(&hysim(&["rerun", path_str(&m)])), 1);
}

#[test]
fn single_cell_converge_grid() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&[
        "converge",
        "--system",
        "oscillator-ex2",
        "--h",
        "1e-2",
        "--eps",
        "1e-3",
        "--ps",
        "--grid",
        "100",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("convergence.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert!(header.iter().any(|c| c == "ps_rho_hat"), "{header:?}");
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| header.iter().position(|c| c == name).unwrap();
    let rho_hat: f64 = rows[0][col("rho_hat")].parse().unwrap();
    let ps: f64 = rows[0][col("ps_rho_hat")].parse().unwrap();
    assert!(rho_hat < ps, "{rho_hat} vs {ps}");
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["rows"], 1);
    assert!(dir.path().join("timing.csv").exists());
}

#[test]
fn converge_without_ps_omits_the_column() {
    let dir = TempDir::new().unwrap();
    let out = hysim(&[
        "converge",
        "--system",
        "toy-two-interval",
        "--h",
        "1e-2,5e-3",
        "--grid",
        "50",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(!text.lines().next().unwrap().contains("ps_rho_hat"));
    assert_eq!(text.lines().count(), 3);
}
