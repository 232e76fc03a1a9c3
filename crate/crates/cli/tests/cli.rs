//! End-to-end tests for the proxlab binary: exit codes, output files, and
//! byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_proxlab");

fn proxlab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("running proxlab")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process terminated by signal")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).expect("writing config");
    path.to_string_lossy().into_owned()
}

const TINY_TRAIN: &str = r#"
algorithm = "proxquant"
epochs = 3
seeds = [1, 2]
batch_size = 16

[dataset]
source = "blobs"
seed = 9
n = 40
classes = 2
dim = 3
spread = 0.7

[model]
hidden = [4]

[schedule.lam]
kind = "homotopy"
rate = 0.01
"#;

#[test]
fn train_writes_traces_and_summary() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), TINY_TRAIN);
    let out = dir.path().join("out");
    let output = proxlab(&["--config", &config, "--out", out.to_str().unwrap(), "train"]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    for seed in [1u64, 2] {
        let raw = fs::read_to_string(out.join(format!("trace-seed-{seed}.jsonl"))).unwrap();
        assert!(raw.ends_with('\n'), "trace must end with a newline");
        let records: Vec<serde_json::Value> = raw
            .lines()
            .map(|line| serde_json::from_str(line).expect("each line parses on its own"))
            .collect();
        assert!(records.len() >= 2);
        assert_eq!(records.first().unwrap()["epoch"], 0);
        assert_eq!(records.last().unwrap()["epoch"], 3);
        for record in &records {
            for key in [
                "step",
                "epoch",
                "loss",
                "f_lambda",
                "grad_norm",
                "step_proximity",
                "sign_change",
                "quantized_error",
            ] {
                assert!(record.get(key).is_some(), "record missing {key}");
            }
        }
    }

    let raw = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(raw.ends_with('\n'));
    let summary: serde_json::Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(summary["algorithm"], "proxquant");
    assert_eq!(summary["seeds"], serde_json::json!([1, 2]));
    assert_eq!(summary["diverged_seeds"], serde_json::json!([]));
    assert!(summary["final_loss"]["mean"].is_f64());
    assert!(summary["final_loss"]["std"].is_f64());
}

#[test]
fn train_reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), TINY_TRAIN);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run_a = proxlab(&["--config", &config, "--out", out_a.to_str().unwrap(), "train"]);
    assert_eq!(exit_code(&run_a), 0);
    // The second run restricts the worker pool: parallelism must not leak
    // into the bytes.
    let run_b = Command::new(BIN)
        .args(["--config", &config, "--out", out_b.to_str().unwrap(), "train"])
        .env("PROXLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(run_b.status.code(), Some(0));
    for name in ["trace-seed-1.jsonl", "trace-seed-2.jsonl", "summary.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn train_seed_override_runs_one_seed() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), TINY_TRAIN);
    let out = dir.path().join("out");
    let output = proxlab(&[
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed-override",
        "7",
        "train",
    ]);
    assert_eq!(exit_code(&output), 0);
    assert!(out.join("trace-seed-7.jsonl").exists());
    assert!(!out.join("trace-seed-1.jsonl").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([7]));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempdir().unwrap();
    let cases = [
        ("unknown-algorithm", "algorithm = \"sgd\"\nepochs = 1\n[dataset]\nsource = \"blobs\"\n"),
        (
            "empty-seeds",
            "algorithm = \"proxquant\"\nepochs = 1\nseeds = []\n[dataset]\nsource = \"blobs\"\n",
        ),
        (
            "freeze-after-end",
            "algorithm = \"proxquant\"\nepochs = 2\n[dataset]\nsource = \"blobs\"\n\
             [schedule]\nfreeze_epoch = 5\n",
        ),
        (
            "straight-through-with-regularizer",
            "algorithm = \"binaryconnect\"\nepochs = 1\n[dataset]\nsource = \"blobs\"\n\
             [regularizer]\nkind = \"binary-l1\"\n",
        ),
        (
            "missing-csv",
            "algorithm = \"proxquant\"\nepochs = 1\n[dataset]\nsource = \"csv\"\n\
             path = \"/nonexistent/data.csv\"\n",
        ),
    ];
    for (label, body) in cases {
        let path = dir.path().join(format!("{label}.toml"));
        fs::write(&path, body).unwrap();
        let out = dir.path().join(label);
        let output =
            proxlab(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "train"]);
        assert_eq!(exit_code(&output), 2, "case {label}");
        assert!(!output.stderr.is_empty(), "case {label} should explain itself");
    }

    // No config at all.
    let output = proxlab(&["train"]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn divergence_exits_three_with_partial_trace() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
algorithm = "proxquant"
epochs = 5
seeds = [3]

[dataset]
source = "blobs"
seed = 9
n = 40
classes = 2
dim = 3
spread = 0.7

[model]
hidden = [4]
activation = "relu"
loss = "squared"

[schedule.eta]
kind = "constant"
eta = 1e100
"#,
    );
    let out = dir.path().join("out");
    let output = proxlab(&["--config", &config, "--out", out.to_str().unwrap(), "train"]);
    assert_eq!(exit_code(&output), 3);

    let raw = fs::read_to_string(out.join("trace-seed-3.jsonl")).unwrap();
    assert!(raw.ends_with('\n'));
    assert!(!raw.trim().is_empty(), "partial trace should hold at least one record");
    for line in raw.lines() {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["diverged_seeds"], serde_json::json!([3]));
}

#[test]
fn theory_known_and_unknown_names() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output = proxlab(&["--out", out.to_str().unwrap(), "theory", "theorem2"]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theory-theorem2.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);

    let output = proxlab(&["--out", out.to_str().unwrap(), "theory", "bogus"]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn gradcheck_passes_and_writes_report() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output = proxlab(&["--out", out.to_str().unwrap(), "gradcheck"]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let raw = fs::read_to_string(out.join("gradcheck.json")).unwrap();
    assert!(raw.ends_with('\n'));
    let report: serde_json::Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn signchange_honors_override_config() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
n = 80
dim = 3
hidden = [6]
warm_epochs = 4
epochs = 6
seeds = [11, 12]
"#,
    );
    let out = dir.path().join("out");
    let output = proxlab(&["--config", &config, "--out", out.to_str().unwrap(), "signchange"]);
    // A deliberately tiny study may fail its comparison; only the plumbing
    // is under test here.
    assert!(matches!(exit_code(&output), 0 | 1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("signchange.json")).unwrap()).unwrap();
    assert_eq!(report["measured"]["seeds"], 2.0);

    let bad = write_config(dir.path(), "epochs = 6\nunknown_knob = 1\n");
    let output = proxlab(&["--config", &bad, "--out", out.to_str().unwrap(), "signchange"]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn prox_table_default_grid() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output = proxlab(&["--out", out.to_str().unwrap(), "prox-table"]);
    assert_eq!(exit_code(&output), 0);
    let raw = fs::read_to_string(out.join("prox-table.csv")).unwrap();
    assert!(raw.ends_with('\n'));
    // Header plus 401 grid points at the default strength.
    assert_eq!(raw.lines().count(), 402);
}

#[test]
fn prox_table_zero_strength_is_identity() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output = proxlab(&["--out", out.to_str().unwrap(), "prox-table", "--lambdas", "0"]);
    assert_eq!(exit_code(&output), 0);
    let raw = fs::read_to_string(out.join("prox-table.csv")).unwrap();
    for line in raw.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], cols[3], "prox at strength zero must return theta: {line}");
        assert!(cols[4].is_empty(), "no domain errors expected: {line}");
    }
}

#[test]
fn prox_table_smoothed_w_marks_out_of_domain_rows() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output = proxlab(&[
        "--out",
        out.to_str().unwrap(),
        "prox-table",
        "--kind",
        "smoothed-w",
        "--lambdas",
        "1",
    ]);
    assert_eq!(exit_code(&output), 0);
    let raw = fs::read_to_string(out.join("prox-table.csv")).unwrap();
    let mut marked = 0usize;
    let mut filled = 0usize;
    for line in raw.lines().skip(1) {
        // csv quoting only appears in the error column, which the split
        // below treats as "nonempty after the fourth comma".
        let cols: Vec<&str> = line.splitn(5, ',').collect();
        let theta: f64 = cols[0].parse().unwrap();
        if theta.abs() > 1.0 + 1e-12 {
            assert!(cols[3].is_empty(), "out-of-domain row must not carry a prox: {line}");
            assert!(!cols[4].is_empty(), "out-of-domain row must carry a marker: {line}");
            marked += 1;
        } else {
            assert!(!cols[3].is_empty(), "in-domain row must carry a prox: {line}");
            filled += 1;
        }
    }
    assert_eq!(marked, 200);
    assert_eq!(filled, 201);
}

#[test]
fn prox_table_rejects_unknown_kind() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let output =
        proxlab(&["--out", out.to_str().unwrap(), "prox-table", "--kind", "elastic-net"]);
    assert_eq!(exit_code(&output), 2);
}
