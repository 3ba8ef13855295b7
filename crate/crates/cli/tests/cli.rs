use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FAST: &[&str] = &[
    "--override",
    "total_steps=20",
    "--override",
    "batch_size=8",
    "--override",
    "extend_copies=2",
    "--override",
    "model_width=2",
    "--override",
    "eval_interval=10",
    "--override",
    "checkpoint_interval=5",
];

fn realmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_realmix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = realmix(args);
    assert!(
        out.status.success(),
        "realmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    realmix(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(FAST.iter().copied()).collect()
}

/// Generates a small dataset under `dir/data`.
fn dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&[
        "generate",
        "--out",
        s(&data),
        "--set",
        "side=8",
        "--set",
        "train_per_class=30",
        "--set",
        "test_per_class=5",
    ]);
    data
}

fn prepared(dir: &Path, data: &Path) -> PathBuf {
    let prep = dir.join("prep");
    ok(&with_fast(&["prepare", "--data", s(data), "--labels", "20", "--seed", "1", "--out", s(&prep)]));
    prep
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prepare_writes_split_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = dir.path().join("prep");
    let args = with_fast(&["prepare", "--data", s(&data), "--labels", "20", "--seed", "1", "--out", s(&prep)]);
    let first = ok(&args);
    let split = read_json(&prep.join("split.json"));
    assert_eq!(split["labeled"].as_array().unwrap().len(), 20);
    assert_eq!(split["seed"], 1);
    assert_eq!(read_json(&prep.join("config.json"))["n_labels"], 20);
    assert!(first.contains("sha256"));
    assert!(first.lines().any(|l| l.starts_with("extend")));
    assert_eq!(ok(&args), first);
    // Different flags must not overwrite an existing preparation.
    let other = with_fast(&["prepare", "--data", s(&data), "--labels", "30", "--seed", "1", "--out", s(&prep)]);
    assert_eq!(code(&other), 2);
    assert_eq!(read_json(&prep.join("split.json")), split);
}

#[test]
fn prepare_mismatch_stores_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = dir.path().join("mm");
    ok(&with_fast(&[
        "prepare",
        "--data",
        s(&data),
        "--mismatch",
        "100",
        "--gamma",
        "0.85",
        "--labels-per-class",
        "3",
        "--out",
        s(&prep),
    ]));
    let config = read_json(&prep.join("config.json"));
    assert_eq!(config["gamma"], 0.85);
    assert_eq!(config["num_classes"], 6);
    assert_eq!(read_json(&prep.join("split.json"))["labeled"].as_array().unwrap().len(), 18);
    let run = dir.path().join("mm-run");
    let stdout = ok(&["train", "--prepared", s(&prep), "--out", s(&run)]);
    assert!(stdout.contains("final test error (EMA)"));
}

fn last_csv_error(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "test_error_ema").unwrap();
    let last = text.lines().last().unwrap();
    last.split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn train_reports_final_error_from_the_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = prepared(dir.path(), &data);
    let run = dir.path().join("run");
    let stdout = ok(&["train", "--prepared", s(&prep), "--out", s(&run)]);
    let last_line = stdout.lines().last().unwrap();
    let expected = format!("final test error (EMA): {:.2}%", 100.0 * last_csv_error(&run.join("metrics.csv")));
    assert_eq!(last_line, expected);
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["status"], "succeeded");
    assert_eq!(manifest["exit_code"], 0);
    assert!(manifest["finished_at"].is_string());

    let evaluated = ok(&["evaluate", "--run", s(&run)]);
    assert!(evaluated.starts_with(&last_line.replace("final test error", "test error")));

    // A finished results directory is never reused.
    assert_eq!(code(&["train", "--prepared", s(&prep), "--out", s(&run)]), 2);
}

#[test]
fn identical_runs_and_resume_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = prepared(dir.path(), &data);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["train", "--prepared", s(&prep), "--out", s(&a)]);
    ok(&["train", "--prepared", s(&prep), "--out", s(&b)]);
    let csv_a = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("metrics.csv")).unwrap());

    let stopped = ok(&["train", "--prepared", s(&prep), "--out", s(&c), "--stop-after", "12"]);
    assert!(stopped.contains("stopped at step 12"));
    let ckpts = c.join("checkpoints");
    ok(&["train", "--prepared", s(&prep), "--out", s(&c), "--resume", s(&ckpts)]);
    assert_eq!(csv_a, std::fs::read(c.join("metrics.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("model/ema.bin")).unwrap(),
        std::fs::read(c.join("model/ema.bin")).unwrap()
    );
}

#[test]
fn degenerate_override_and_bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = prepared(dir.path(), &data);
    let run = dir.path().join("sup");
    let stdout = ok(&["train", "--prepared", s(&prep), "--out", s(&run), "--override", "lambda_max=0"]);
    assert!(stdout.contains("final test error"));
    assert_eq!(read_json(&run.join("config.json"))["lambda_max"], 0.0);

    let bad = dir.path().join("bad");
    assert_eq!(code(&["train", "--prepared", s(&prep), "--out", s(&bad), "--override", "bogus=1"]), 2);
    assert_eq!(code(&["train", "--prepared", s(&prep), "--out", s(&bad), "--override", "gamma=1.5"]), 2);
    assert_eq!(code(&["train", "--prepared", s(&dir.path().join("nope")), "--out", s(&bad)]), 2);
    assert_eq!(code(&["experiment", "bogus", "--data", s(&data), "--out", s(&bad)]), 2);
}

#[test]
fn runtime_abort_exits_with_three_and_records_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let prep = prepared(dir.path(), &data);
    let run = dir.path().join("boom");
    let out = realmix(&["train", "--prepared", s(&prep), "--out", s(&run), "--override", "learning_rate=1e300"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["exit_code"], 3);
}

#[test]
fn experiment_writes_a_report_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = dir.path().join("exp");
    let mut args = vec!["experiment", "labels", "--data", s(&data), "--counts", "20", "--seeds", "0", "--out", s(&out)];
    args.extend(FAST);
    let stdout = ok(&args);
    assert!(stdout.contains("realmix"));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["kind"], "labels");
    assert_eq!(report["conditions"].as_array().unwrap().len(), 2);
    let series = ok(&["report", s(&out), "--format", "series"]);
    assert_eq!(series.lines().count(), 3);
    let again = dir.path().join("again");
    ok(&["report", s(&out.join("report.json")), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("summary.csv")).unwrap(),
        std::fs::read(again.join("summary.csv")).unwrap()
    );
    // Results directories are never overwritten.
    assert_eq!(code(&args), 2);
}

#[test]
fn mismatch_experiment_has_five_levels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = dir.path().join("mm");
    let mut args = vec![
        "experiment",
        "mismatch",
        "--data",
        s(&data),
        "--labels-per-class",
        "3",
        "--seeds",
        "0",
        "--out",
        s(&out),
    ];
    args.extend(FAST);
    ok(&args);
    let series = ok(&["report", s(&out), "--format", "series"]);
    let xs: Vec<&str> = series.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(xs, vec!["0", "25", "50", "75", "100"]);
}
