//! Black-box tests of the `dnrr` binary.

use std::path::Path;
use std::process::Command;

fn dnrr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dnrr"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = dnrr::cli::preset("henon-3pct").unwrap();
    cfg.simulate.n = 60;
    cfg.simulate.target_eta = None;
    cfg.chain.iterations = 300;
    cfg.chain.burn_in = 100;
    cfg.chain.thin = 5;
    cfg.chain.y_thin = 10;
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

#[test]
fn simulate_then_denoise_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());

    let out = dnrr()
        .args(["simulate", "--seed", "5", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = dir.path().join("trajectory.csv");
    assert!(traj.exists());

    let out = dnrr()
        .arg("denoise")
        .arg(&traj)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("chain/manifest.json").exists());

    let out = dnrr().arg("report").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("summary.md").exists());
}

#[test]
fn rho_sweep_with_jobs_limit() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dnrr()
        .args(["simulate", "--seed", "5"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = dnrr()
        .arg("rho-sweep")
        .arg(dir.path().join("trajectory.csv"))
        .arg("--config")
        .arg(&config)
        .args(["--rhos", "1e2,1e3", "--jobs", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("rho_sweep.csv").exists());
}

#[test]
fn unknown_preset_exits_with_config_code() {
    let out = dnrr()
        .args(["simulate", "--preset", "does-not-exist"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnrr()
        .arg("denoise")
        .arg(dir.path().join("nope.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_on_missing_chain_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnrr().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
