//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn increpr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_increpr")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_solve_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&increpr(&["gen", "--n", "12", "--m", "60", "--seed", "4", "--out", "ens.txt"], d));
    assert!(d.join("ens.txt.truth").exists());

    let summary = ok(&increpr(
        &["solve", "--ensemble", "ens.txt", "--truth", "ens.txt.truth", "--seed", "4", "--out", "x.txt"],
        d,
    ));
    let s: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(s["relerr"].as_f64().unwrap() < 1e-5, "{summary}");
    assert_eq!(s["n"], 12);
    assert_eq!(s["m"], 60);

    let audit = ok(&increpr(&["cert-audit", "--ensemble", "ens.txt", "--factor", "x.txt"], d));
    let a: serde_json::Value = serde_json::from_str(&audit).unwrap();
    assert_eq!(a["certified"], true, "{audit}");
    assert!(a["gap"].as_f64().unwrap() < 1e-6, "{audit}");
}

#[test]
fn phase_transition_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["phase-transition", "--n", "10", "--m-grid", "2,4", "--trials", "3", "--seed", "8"];
    let a = ok(&increpr(&args, d));
    let b = ok(&increpr(&args, d));
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert!(lines.next().unwrap().starts_with("m_over_n,m,trials,recovery_rate"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with(",NA")));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("sweep.cfg"), "n = 10\nm_over_n = 4\ntrials = 2\nsnr_db = 20, 40\n").unwrap();
    let csv = ok(&increpr(&["noise-sweep", "--config", "sweep.cfg", "--out", "noise.csv"], d));
    assert!(csv.is_empty());
    let text = std::fs::read_to_string(d.join("noise.csv")).unwrap();
    let snrs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(snrs, ["20", "40"]);
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.cfg"), "n = 8\nwhat = 3\n").unwrap();
    let out = increpr(&["phase-transition", "--config", "bad.cfg"], d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");

    let out = increpr(&["solve"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble"));

    let out = increpr(&["phase-transition", "--rank1", "nope"], d);
    assert!(!out.status.success());
}

#[test]
fn fourier_writes_report_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&increpr(
        &["fourier", "--size", "6", "--starts", "1", "--repeats", "2", "--out", "f.json", "--set", "max_iters=50"],
        d,
    ));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("f.json")).unwrap()).unwrap();
    assert_eq!(r["starts"].as_array().unwrap().len(), 1);
    assert_eq!(r["mean_per_repeat"].as_array().unwrap().len(), 2);
    let pgm = std::fs::read_to_string(d.join("f.json.pgm")).unwrap();
    assert!(pgm.starts_with("P2"));
}
