//! End-to-end checks of the `vera` binary: output schemas, exit codes,
//! determinism.

use std::path::Path;
use std::process::{Command, Output};

fn vera(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vera"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const QUICK_TRAIN: &[&str] = &[
    "train",
    "--method",
    "vera",
    "--rank",
    "4",
    "--steps",
    "20",
    "--batch",
    "8",
    "--eval-size",
    "32",
    "--eval-every",
    "20",
    "--d-model",
    "16",
    "--seed",
    "5",
    "--data-seed",
    "6",
];

#[test]
fn table1_emits_18_rows_and_succeeds() {
    let out = vera(&["table1"]);
    assert_eq!(out.status.code(), Some(0));
    // header + 18 data rows
    assert_eq!(stdout(&out).lines().count(), 19);
    assert!(stderr(&out).contains("config:"));

    let csv = vera(&["table1", "--format", "csv"]);
    let body = stdout(&csv);
    let mut lines = body.lines();
    assert!(lines.next().unwrap().starts_with("model,method,rank"));
    assert_eq!(lines.count(), 18);
}

#[test]
fn plan_json_matches_closed_forms() {
    let out = vera(&[
        "plan",
        "--blocks",
        "12",
        "--dmodel",
        "768",
        "--adapted-per-block",
        "2",
        "--ranks",
        "1,16",
        "--method",
        "vera,lora",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let find = |method: &str, rank: u64| {
        rows.iter()
            .find(|r| r["method"] == method && r["rank"] == rank)
            .unwrap()
    };
    assert_eq!(find("vera", 1)["trainable_params"], 18_456);
    assert_eq!(find("vera", 16)["trainable_params"], 18_816);
    assert_eq!(find("lora", 16)["trainable_params"], 589_824);
    assert_eq!(find("lora", 16)["stored_bytes"], 4 * 589_824);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = vera(&["table1", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = vera(&["definitely-not-a-subcommand"]);
    assert_eq!(out.status.code(), Some(1));
    let out = vera(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn train_inspect_magnitude_merge_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("toy.vera");
    let base = dir.path().join("base.vkwt");
    let merged = dir.path().join("merged.vkwt");
    let curve = dir.path().join("curve.csv");

    let mut args: Vec<&str> = QUICK_TRAIN.to_vec();
    let ckpt_s = ckpt.to_str().unwrap().to_owned();
    let base_s = base.to_str().unwrap().to_owned();
    let curve_s = curve.to_str().unwrap().to_owned();
    args.extend(["--out", &ckpt_s, "--export-base", &base_s, "--curve-out", &curve_s]);
    let out = vera(&args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(ckpt.exists() && base.exists() && curve.exists());

    // loss curve schema
    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert!(curve_text.starts_with("step,loss,accuracy\n"));
    assert_eq!(curve_text.lines().count(), 21);

    // inspect round-trips the stored configuration
    let out = vera(&["inspect", "--ckpt", &ckpt_s, "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let desc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(desc["method"], "vera");
    assert_eq!(desc["rank"], 4);
    assert_eq!(desc["master_seed"], 5);
    assert_eq!(desc["layer_count"], 2);
    assert_eq!(desc["payload_bytes"], 2 * 4 * (16 + 4));

    // magnitude CSV on the trained checkpoint
    let out = vera(&["magnitude", "--ckpt", &ckpt_s]);
    assert_eq!(out.status.code(), Some(0));
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "layer,role,d_change_norm,b_norm");
    assert_eq!(lines.count(), 2);

    // merge into the exported base
    let merged_s = merged.to_str().unwrap().to_owned();
    let out = vera(&["merge", "--ckpt", &ckpt_s, "--base", &base_s, "--out", &merged_s]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("5 tensors"));
    assert!(merged.exists());
}

#[test]
fn merge_shape_mismatch_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("toy.vera");
    let base16 = dir.path().join("base16.vkwt");
    let wrong = dir.path().join("wrong.vkwt");
    let merged = dir.path().join("m.vkwt");

    let ckpt_s = ckpt.to_str().unwrap().to_owned();
    let base16_s = base16.to_str().unwrap().to_owned();
    let mut args: Vec<&str> = QUICK_TRAIN.to_vec();
    args.extend(["--out", &ckpt_s, "--export-base", &base16_s]);
    assert_eq!(vera(&args).status.code(), Some(0));

    // base from a model with a different width: same tensor names, wrong shapes
    let wrong_s = wrong.to_str().unwrap().to_owned();
    let out = vera(&[
        "train",
        "--method",
        "vera",
        "--rank",
        "4",
        "--steps",
        "1",
        "--batch",
        "2",
        "--eval-size",
        "8",
        "--eval-every",
        "1",
        "--d-model",
        "32",
        "--seed",
        "5",
        "--data-seed",
        "6",
        "--export-base",
        &wrong_s,
    ]);
    assert_eq!(out.status.code(), Some(0));

    let merged_s = merged.to_str().unwrap().to_owned();
    let out = vera(&["merge", "--ckpt", &ckpt_s, "--base", &wrong_s, "--out", &merged_s]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error: dimension-mismatch"));

    // missing checkpoint file is also a validation error
    let out = vera(&["inspect", "--ckpt", dir.path().join("nope.vera").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes() {
    let out = vera(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("max relative error"));

    let out = vera(&["gradcheck", "--float64", "--tolerance", "1e-4"]);
    assert_eq!(out.status.code(), Some(0));

    // an unreachable tolerance trips the failed-check exit code
    let out = vera(&["gradcheck", "--tolerance", "1e-13"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("error: check-failed"));
}

#[test]
fn magnitude_rejects_non_vera_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("lora.vera");
    let ckpt_s = ckpt.to_str().unwrap().to_owned();
    let out = vera(&[
        "train",
        "--method",
        "lora",
        "--rank",
        "2",
        "--steps",
        "5",
        "--batch",
        "4",
        "--eval-size",
        "8",
        "--eval-every",
        "5",
        "--d-model",
        "16",
        "--out",
        &ckpt_s,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = vera(&["magnitude", "--ckpt", &ckpt_s]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unsupported-method"));
}

#[test]
fn identical_flags_reproduce_identical_output() {
    let run = || {
        let out = vera(&["sweep", "--methods", "vera", "--ranks", "1,2", "--seeds", "2",
            "--steps", "10", "--batch", "4", "--eval-size", "16", "--d-model", "16",
            "--format", "csv"]);
        assert_eq!(out.status.code(), Some(0));
        stdout(&out)
    };
    let first = run();
    assert_eq!(first, run());
    // per-seed rows: 2 cells × 2 seeds + header
    assert_eq!(first.lines().count(), 5);
}

#[test]
fn sweep_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let path_s = path.to_str().unwrap().to_owned();
    let out = vera(&["sweep", "--methods", "vera,lora", "--ranks", "1", "--seeds", "2",
        "--steps", "10", "--batch", "4", "--eval-size", "16", "--d-model", "16",
        "--out", &path_s]);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(Path::new(&path_s)).unwrap();
    assert!(body.starts_with("method,rank,params,seed,accuracy,is_median\n"));
    assert_eq!(body.lines().count(), 5);
}
