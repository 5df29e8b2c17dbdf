//! Drives the installed binary end to end: argument validation, CSV
//! determinism, file ingestion, and error exit codes.

use std::fs;
use std::process::{Command, Output};

use tpl_core::media::{synth_sequence, write_y4m, SynthKind};

fn tpltool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpltool"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn missing_required_arguments_exit_with_usage_error() {
    // No --qstep.
    let out = tpltool(&["encode", "--synth", "static"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--qstep"));

    // Neither --input nor --synth.
    let out = tpltool(&["encode", "--qstep", "24"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_csv() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = tpltool(&[
            "encode",
            "--synth",
            "noisy-shift",
            "--width",
            "64",
            "--height",
            "64",
            "--frames",
            "17",
            "--qstep",
            "24",
            "--model",
            "tpl",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir_a.path().join("encode_frames.csv")).unwrap();
    let b = fs::read(dir_b.path().join("encode_frames.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn y4m_input_matches_equivalent_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip.y4m");
    let seq =
        synth_sequence(SynthKind::Scene { dx: 1, dy: 1, amplitude: 6 }, 64, 64, 17, 0).unwrap();
    write_y4m(&seq, fs::File::create(&clip).unwrap()).unwrap();

    let from_file = dir.path().join("from_file");
    let out = tpltool(&[
        "encode",
        "--input",
        clip.to_str().unwrap(),
        "--qstep",
        "24",
        "--out-dir",
        from_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let from_synth = dir.path().join("from_synth");
    let out = tpltool(&[
        "encode",
        "--synth",
        "scene",
        "--width",
        "64",
        "--height",
        "64",
        "--frames",
        "17",
        "--qstep",
        "24",
        "--out-dir",
        from_synth.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(
        fs::read(from_file.join("encode_frames.csv")).unwrap(),
        fs::read(from_synth.join("encode_frames.csv")).unwrap()
    );
}

#[test]
fn degenerate_observation_reports_failure() {
    // A frozen clip at a coarse quantizer: every inter residual
    // quantizes to zero in both runs, so the probe has no effect and
    // the measurement must refuse to divide by it.
    let dir = tempfile::tempdir().unwrap();
    let out = tpltool(&[
        "observe",
        "--synth",
        "static",
        "--gop-mode",
        "low-delay",
        "--qstep",
        "80",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn clip_shorter_than_one_group_reports_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = tpltool(&[
        "encode",
        "--synth",
        "static",
        "--frames",
        "10",
        "--qstep",
        "24",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need at least"));
}
