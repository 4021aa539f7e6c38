//! Drives the `reviewrank` binary from integration tests.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reviewrank"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(cwd: &Path, args: &[&str]) -> String {
    let o = run(cwd, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// Toy data, split, retrieval model and the given models trained and
/// evaluated under `cwd/out`; returns the report text.
pub fn toy_pipeline(cwd: &Path, models: &[&str], extra: &[&str]) -> String {
    let with = |args: &[&str]| -> Vec<String> {
        args.iter().chain(extra).map(|s| s.to_string()).collect()
    };
    let call = |args: Vec<String>| ok(cwd, &args.iter().map(String::as_str).collect::<Vec<_>>());
    call(with(&["toy", "--output", "toy.jsonl"]));
    call(with(&["prepare", "--dataset", "toy.jsonl", "--out", "out"]));
    call(with(&["train", "--retrieval", "--out", "out"]));
    let mut evals = Vec::new();
    for m in models {
        call(with(&["train", "--model", m, "--out", "out"]));
        call(with(&["eval", "--model", m, "--out", "out"]));
        evals.push(format!("out/eval-{m}.json"));
    }
    let mut args = vec!["report".to_string(), "--out".into(), "out".into(), "--eval".into()];
    args.extend(evals);
    args.extend(extra.iter().map(|s| s.to_string()));
    call(args)
}
