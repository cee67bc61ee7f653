use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn shrinkflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinkflow")).args(args).env("SHRINKFLOW_THREADS", "2").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A coarse trajectory shared by the tests below.
fn trajectory() -> &'static (TempDir, String) {
    static T: OnceLock<(TempDir, String)> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("traj");
        let o = shrinkflow(&["flow", "--builtin", "icosphere:2", "--dt", "5e-4", "--out", path(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let s = path(&out).to_owned();
        (dir, s)
    })
}

fn header(json_file: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(json_file).unwrap()).unwrap();
    v["header"].clone()
}

#[test]
fn missing_mesh_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = shrinkflow(&["flow", "--mesh", "/does/not/exist.off", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let (_, traj) = trajectory();
    let dir = tempfile::tempdir().unwrap();
    let o = shrinkflow(&["simulate", "--traj", traj, "--start", "v0", "--t0", "0.02", "--t1", "0.1", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn times_outside_the_trajectory_are_rejected() {
    let (_, traj) = trajectory();
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--traj", traj, "--start", "v0", "--t0", "0.001", "--t1", "0.1", "--seed", "1", "--out", path(dir.path())];
    assert_eq!(shrinkflow(&args).status.code(), Some(2));
    let o = shrinkflow(&["pde", "--traj", path(dir.path()), "--init", "uniform", "--eps", "0.05", "--out", path(&dir.path().join("h.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flow_outputs_carry_configuration_and_version() {
    let (_, traj) = trajectory();
    let h = header(&Path::new(traj).join("flow.json"));
    assert_eq!(h["tool"], "shrinkflow");
    assert_eq!(h["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(h["config"]["dt0"], 5e-4);
    let csv = std::fs::read_to_string(Path::new(traj).join("flow.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# {"));
    let embedded: serde_json::Value = serde_json::from_str(&first[2..]).unwrap();
    assert_eq!(embedded, h);
}

#[test]
fn simulate_records_the_convention_and_is_reproducible() {
    let (_, traj) = trajectory();
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = shrinkflow(&[
            "simulate", "--traj", traj, "--start", "v0", "--t0", "0.02", "--t1", "0.1", "--paths", "200", "--samples", "4",
            "--conv", "one", "--seed", "5", "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let h = header(&a.join("martingale.json"));
    assert_eq!(h["convention"]["c"], 1.0);
    assert_eq!(h["config"]["seed"], 5);
    for f in ["paths.csv", "martingale.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn pde_couple_and_decay_run_end_to_end() {
    let (_, traj) = trajectory();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let h = d.join("pde").join("h.csv");
    let o = shrinkflow(&["pde", "--traj", traj, "--init", "delta:3", "--eps", "0.02", "--until", "0.1", "--out", path(&h)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("pde").join("h.json").exists());

    let o = shrinkflow(&[
        "couple", "--traj", traj, "--start-a", "v0", "--start-b", "v100", "--window", "0.02:0.2", "--runs", "20", "--seed", "3",
        "--out", path(&d.join("couple")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("couple").join("runs.csv").exists());

    let o = shrinkflow(&[
        "tv-decay", "--traj", traj, "--start-a", "v0", "--start-b", "v100", "--u0", "0.02", "--lengths", "0.05,0.1,0.15", "--runs",
        "20", "--seed", "3", "--out", path(&d.join("decay")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = shrinkflow(&[
        "birthless", "--traj", traj, "--start", "v0", "--eps", "0.05,0.03", "--t-star", "0.2", "--paths", "300", "--cells", "12",
        "--seed", "2", "--out", path(&d.join("birthless")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_arguments_are_configuration_errors() {
    let (_, traj) = trajectory();
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    assert_eq!(shrinkflow(&["flow", "--builtin", "torus:3", "--out", out]).status.code(), Some(2));
    assert_eq!(
        shrinkflow(&["simulate", "--traj", traj, "--start", "v0", "--t0", "0.02", "--t1", "0.1", "--conv", "two", "--seed", "1", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        shrinkflow(&["couple", "--traj", traj, "--start-a", "v0", "--start-b", "v1", "--window", "0.2", "--seed", "1", "--out", out])
            .status
            .code(),
        Some(2)
    );
}
