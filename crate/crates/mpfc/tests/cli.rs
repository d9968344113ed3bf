//! Black-box tests of the installed binary: exit codes, file outputs,
//! and run-to-run determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mpfc::output::{read_snapshot, CONVERGENCE_HEADER, ENERGY_HEADER};

fn mpfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpfc"))
        .args(args)
        .output()
        .expect("spawn mpfc")
}

fn write_cfg(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL_RUN: &str = "\
grid.nx = 16
grid.ny = 16
params.c0 = 1e-12
time.dt = 0.01
time.t_final = 0.05
io.snapshot_stride = 2
";

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "params.epsilon = 1.5\n");
    let out = mpfc(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.epsilon"), "stderr: {err}");

    let out = mpfc(&["simulate", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mpfc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn energy_demo_rejects_reflecting_walls() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "grid.bc = neumann\n");
    let out = mpfc(&[
        "energy-demo",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("periodic"), "stderr: {err}");
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL_RUN);
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = mpfc(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        dir
    };
    let a = run("a");
    let b = run("b");

    for file in ["energy.csv", "final.bin"] {
        let ba = fs::read(a.join(file)).unwrap();
        let bb = fs::read(b.join(file)).unwrap();
        assert_eq!(ba, bb, "{file} differs between identical runs");
    }
    for snap in [
        "snapshot_000000.bin",
        "snapshot_000002.bin",
        "snapshot_000004.bin",
    ] {
        assert!(a.join(snap).exists(), "missing {snap}");
    }
    let field = read_snapshot(&a.join("final.bin")).unwrap();
    assert_eq!((field.grid.nx, field.grid.ny), (16, 16));
    assert!(field.data.iter().all(|v| v.is_finite()));

    let csv = fs::read_to_string(a.join("energy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(ENERGY_HEADER));
    // Row zero plus one row per step at the default stride of 1.
    assert_eq!(lines.count(), 6);
}

#[test]
fn scheme_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL_RUN);
    let run = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut args = vec!["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = mpfc(&args);
        assert!(out.status.success());
        fs::read(dir.join("energy.csv")).unwrap()
    };
    let averaged = run("cn", &[]);
    let first = run("fo", &["--scheme", "first-order"]);
    assert_ne!(averaged, first, "scheme flag had no effect");
}

#[test]
fn converge_writes_rate_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "params.c0 = 1e-12\ntime.t_final = 0.25\n");
    let dir = tmp.path().join("conv");
    let out = mpfc(&[
        "converge",
        "--config",
        &cfg,
        "--out",
        dir.to_str().unwrap(),
        "--resolutions",
        "8,16",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CONVERGENCE_HEADER);
    assert_eq!(lines.len(), 3);
    let coarse: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(coarse[0], "8");
    assert!(coarse[2].is_empty() && coarse[4].is_empty() && coarse[6].is_empty());
    let fine: Vec<&str> = lines[2].split(',').collect();
    assert!(fine.iter().all(|cell| !cell.is_empty()));
    let rate: f64 = fine[2].parse().unwrap();
    assert!(rate.is_finite());
}
