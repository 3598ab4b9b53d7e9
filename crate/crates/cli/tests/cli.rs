use std::fs;
use std::process::{Command, Output};

use simenv_cli::{run_episode, Policy, RunConfig, Termination, TraceRecord};

fn simenv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simenv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn parse_csv(bytes: &[u8]) -> Vec<TraceRecord> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn constant_run_writes_capped_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let out = simenv(&[
        "run",
        "--env",
        "Greenhouse-v0",
        "--policy",
        "constant:0.2",
        "--seed",
        "7",
        "--max-days",
        "50",
        "--format",
        "csv",
        "--quiet",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let bytes = fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"day,temp,humidity,alive,dead,water_use,action,reward\n"));
    let records = parse_csv(&bytes);
    assert!(!records.is_empty() && records.len() <= 50);
    assert_eq!(records[0].action, None);
    assert_eq!(records[0].reward, None);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.day, k as u64);
        assert_eq!(r.water_use, 200.0 * k as f64);
        assert_eq!(r.alive + r.dead, 200);
        if k > 0 {
            assert_eq!(r.action, Some(200.0));
        }
    }
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["csv", "jsonl"] {
        let mut files = Vec::new();
        for i in 0..2 {
            let path = dir.path().join(format!("{format}{i}"));
            let out = simenv(&[
                "run",
                "--policy",
                "random",
                "--seed",
                "7",
                "--quiet",
                "--format",
                format,
                "--output",
                path.to_str().unwrap(),
            ]);
            assert_eq!(out.status.code(), Some(0));
            files.push(fs::read(&path).unwrap());
        }
        assert_eq!(files[0], files[1]);
    }
}

#[test]
fn quiet_only_silences_the_log() {
    let loud = simenv(&["run", "--policy", "constant:0.2", "--seed", "3"]);
    let quiet = simenv(&["run", "--policy", "constant:0.2", "--seed", "3", "--quiet"]);
    assert_eq!(loud.stdout, quiet.stdout);
    let loud_err = String::from_utf8(loud.stderr).unwrap();
    assert!(loud_err.starts_with("day 0 alive: 200, dead: 0\n"));
    let quiet_err = String::from_utf8(quiet.stderr).unwrap();
    assert!(!quiet_err.contains("alive:"));
}

#[test]
fn fallback_runs_without_an_environment() {
    let out = simenv(&["run", "--policy", "fallback", "--seed", "7", "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let records = parse_csv(&out.stdout);
    assert_eq!(records.last().unwrap().alive, 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("episode done"));
}

#[test]
fn cap_is_reported_apart_from_done() {
    let out = simenv(&[
        "run",
        "--policy",
        "constant:0",
        "--seed",
        "2",
        "--max-days",
        "3",
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(parse_csv(&out.stdout).len(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max-days cap"));
}

#[test]
fn jsonl_omits_absent_fields() {
    let out = simenv(&[
        "run",
        "--policy",
        "constant:0.2",
        "--seed",
        "1",
        "--format",
        "jsonl",
        "--quiet",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("{\"day\":0,"));
    assert!(!first.contains("action") && !first.contains("reward"));
    for line in text.lines() {
        let record: TraceRecord = serde_json::from_str(line).unwrap();
        assert_eq!(serde_json::to_string(&record).unwrap(), line);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(
        simenv(&["run", "--env", "Missing-v0", "--quiet"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        simenv(&["run", "--policy", "constant:1.2"]).status.code(),
        Some(1)
    );
    assert_eq!(
        simenv(&["run", "--policy", "greedy"]).status.code(),
        Some(1)
    );
    assert_eq!(simenv(&["run", "--max-days", "0"]).status.code(), Some(1));
    assert_eq!(simenv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(simenv(&["--help"]).status.code(), Some(0));
    assert_eq!(
        simenv(&["verify-equivalence", "--policy", "random", "--quiet"])
            .status
            .code(),
        Some(1)
    );
    let out = simenv(&["run", "--quiet", "--output", "/nonexistent/dir/t.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/dir/t.csv"));
}

#[test]
fn verify_equivalence_reports_divergence() {
    let same = simenv(&[
        "verify-equivalence",
        "--policy",
        "constant:0.2",
        "--seed",
        "7",
        "--quiet",
    ]);
    assert_eq!(same.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&same.stdout).starts_with("identical"));

    let diff = simenv(&[
        "verify-equivalence",
        "--policy",
        "constant:0.5",
        "--seed",
        "7",
        "--quiet",
    ]);
    assert_eq!(diff.status.code(), Some(3));
    let report = String::from_utf8(diff.stdout).unwrap();
    assert!(
        report.starts_with("traces diverge at row 1 (day 1): humidity"),
        "{report}"
    );

    let forced = simenv(&[
        "verify-equivalence",
        "--policy",
        "constant:0.5",
        "--seed",
        "7",
        "--reference",
        "forced",
        "--quiet",
    ]);
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn library_run_matches_binary_output() {
    let config = RunConfig::new("Greenhouse-v0", Policy::Random, 11);
    let outcome = run_episode(&config).unwrap();
    assert_eq!(outcome.termination, Termination::Done);
    let out = simenv(&["run", "--policy", "random", "--seed", "11", "--quiet"]);
    assert_eq!(parse_csv(&out.stdout), outcome.records);
}
