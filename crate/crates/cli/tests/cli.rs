//! Black-box tests of the `lindlab` binary: exit codes, artifact shape, and
//! byte determinism across reruns and thread counts.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lindlab")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lindlab-cli-test-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("create scratch dir");
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn lindlab")
}

#[test]
fn linres_check_passes_and_writes_artifact() {
    let out = scratch("linres.csv");
    let res = run(&["--out", out.to_str().unwrap(), "linres-check"]);
    assert!(
        res.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&res.stdout),
        String::from_utf8_lossy(&res.stderr)
    );
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("[PASS]"), "no pass lines in: {stdout}");
    assert!(!stdout.contains("[FAIL]"), "failure in: {stdout}");
    let text = fs::read_to_string(&out).expect("artifact written");
    assert!(text.starts_with("# artifact_version = "), "metadata header missing");
    assert!(text.contains("\n# command = linres-check\n"));
    assert!(text.contains("a_quadrature"));
}

#[test]
fn invalid_config_reports_machine_readable_error() {
    let cfg = scratch("bad.json");
    fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    let res = run(&["--config", cfg.to_str().unwrap(), "linres-check"]);
    assert_eq!(res.status.code(), Some(2), "config errors must exit 2");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(
        stdout.contains(r#""status":"error""#),
        "missing error summary: {stdout}"
    );
}

#[test]
fn failed_assertion_exits_one_with_summary() {
    // An impossible slope window forces a controlled assertion failure.
    let cfg = scratch("sweep_fail.json");
    fs::write(
        &cfg,
        r#"{"n_qubits": [2], "delta_points": 3, "n_samples": 30,
            "slope_window": [10.0, 11.0]}"#,
    )
    .unwrap();
    let out = scratch("sweep_fail.csv");
    let res = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "mean-tv-sweep",
    ]);
    assert_eq!(res.status.code(), Some(1), "assertion failures must exit 1");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("[FAIL]"), "missing fail line: {stdout}");
    assert!(
        stdout.contains(r#""status":"failed""#),
        "missing failure summary: {stdout}"
    );
}

#[test]
fn artifacts_are_byte_identical_across_reruns_and_thread_counts() {
    let cfg = scratch("sweep_det.json");
    fs::write(
        &cfg,
        r#"{"n_qubits": [2], "delta_points": 3, "n_samples": 30, "slope_window": null}"#,
    )
    .unwrap();
    let out = scratch("sweep_det.csv");
    let mut images = Vec::new();
    for threads in ["0", "1", "4"] {
        let res = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "mean-tv-sweep",
        ]);
        assert!(
            res.status.success(),
            "threads={threads}: {}",
            String::from_utf8_lossy(&res.stdout)
        );
        images.push(fs::read(&out).expect("artifact"));
    }
    assert_eq!(images[0], images[1], "rerun changed bytes");
    assert_eq!(images[0], images[2], "thread count changed bytes");
}
