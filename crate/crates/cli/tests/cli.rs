//! End-to-end runs of the `dualcast` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dualcast(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualcast")).args(args).current_dir(dir).output().unwrap()
}

const QUICK: &str = "n_tx = 16\nk_devices = 3\nsnr_db_points = 0,10\ntrials = 3\nber_symbols = 1000\nbase_seed = 5\n";

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), QUICK).unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = dualcast(&["simulate", "--config", "run.conf", "--scheme", "pldm1", "--out", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.summary.json"), read("b.summary.json"));
    let csv = String::from_utf8(read("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 3);
    assert!(csv.lines().skip(1).all(|l| l.contains(",pldm1,")));
}

#[test]
fn overrides_and_trace_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), QUICK).unwrap();
    let out = dualcast(
        &[
            "simulate",
            "--config",
            "run.conf",
            "--snr",
            "-10:5:-5",
            "--trials",
            "2",
            "--ber-symbols",
            "0",
            "--seed",
            "9",
            "--out",
            "o/x.csv",
            "--verbose",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/x.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3);
    // BER disabled leaves the last two columns empty.
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",,")));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/x.trace.json")).unwrap()).unwrap();
    assert_eq!(trace.as_array().unwrap().len(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/x.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["base_seed"], 9);
}

#[test]
fn validate_reports_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.conf"), QUICK).unwrap();
    std::fs::write(dir.path().join("bad.conf"), "trials = 0\n").unwrap();
    std::fs::write(dir.path().join("typo.conf"), "n_txx = 4\n").unwrap();
    let good = dualcast(&["validate", "--config", "good.conf"], dir.path());
    assert!(good.status.success());
    assert!(String::from_utf8_lossy(&good.stdout).contains("n_tx = 16"));
    for f in ["bad.conf", "typo.conf", "missing.conf"] {
        let out = dualcast(&["validate", "--config", f], dir.path());
        assert_eq!(out.status.code(), Some(2), "{f}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn oracle_toy_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualcast(&["oracle", "--toy", "--json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checks: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(checks.as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert_eq!(dualcast(&["oracle"], dir.path()).status.code(), Some(2));
}
