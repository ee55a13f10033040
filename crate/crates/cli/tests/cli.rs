use std::path::Path;
use std::process::Command;

use lowthrust_core::problem::Study;
use lowthrust_core::transfer::{solve_case, RunOptions};

fn lowthrust(out: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lowthrust"));
    cmd.env("LOWTHRUST_OUT", out);
    cmd
}

#[test]
fn configuration_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "colour = \"blue\"\n").unwrap();
    let code = |args: &[&str]| lowthrust(dir.path()).args(args).status().unwrap().code();
    assert_eq!(code(&["run", "--study", "meo", "--case", "1", "--config", bad.to_str().unwrap()]), Some(4));
    assert_eq!(code(&["run", "--study", "meo", "--case", "1", "--max-time", "-5"]), Some(4));
    assert_eq!(code(&["run", "--study", "meo", "--case", "9"]), Some(4));
    assert_eq!(code(&["run", "--study", "leo", "--case", "1"]), Some(4));
    assert_eq!(code(&["run", "--study", "meo", "--case", "1", "--warm-start", "/nonexistent.csv"]), Some(4));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn run_writes_artifacts_matching_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let status = lowthrust(dir.path()).args(["run", "--study", "meo", "--case", "1"]).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let case = dir.path().join("meo-1");
    for file in ["trajectory.csv", "guess.csv", "summary.json", "summary.csv", "iterations.jsonl"] {
        assert!(case.join(file).is_file(), "{file} missing");
    }
    assert!(!case.join("failure.json").exists());

    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(case.join("summary.json")).unwrap()).unwrap();
    let lib = solve_case(Study::Meo, 1, &RunOptions::default(), None).unwrap();
    assert_eq!(summary["metrics"]["delta_v"].as_f64().unwrap(), lib.metrics.delta_v);
    assert_eq!(summary["metrics"]["thrust_arcs"].as_u64().unwrap(), lib.metrics.thrust_arcs as u64);
    assert_eq!(summary["structure"], lib.outcome.structure.signature());
    assert_eq!(summary["status"], "converged");
}
