//! End-to-end checks of the `convrecon` binary: commands, artifacts, file
//! formats and exit codes.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--synth",
    "--conversations",
    "3",
    "--utterances",
    "5",
    "--epochs",
    "3",
    "--hidden",
    "4",
];

fn convrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convrecon"))
        .args(args)
        .env_remove("CONVRECON_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_three_splits_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = convrecon(&["synth", "--seed", "4", "--out", path(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(
            x,
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between identical seeds"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
}

#[test]
fn synth_rejects_empty_conversations() {
    let dir = tempfile::tempdir().unwrap();
    let o = convrecon(&["synth", "--utterances", "0", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec![
        "train",
        "--missing-rate",
        "0.3",
        "--seed",
        "2",
        "--out",
        path(&out),
    ];
    args.extend_from_slice(TINY);
    let o = convrecon(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("WAF1"));
    for f in [
        "config.json",
        "seed.txt",
        "masks/train.json",
        "masks/val.json",
        "masks/test.json",
        "checkpoint.json",
        "history.csv",
        "metrics.txt",
        "metrics.csv",
        "confusion.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\nwaf1,"));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4, "{history}");
    let config: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["model"]["dims"], serde_json::json!([8, 8, 8]));
    assert_eq!(config["train"]["seed"], 2);
}

#[test]
fn replay_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let mut args = vec![
        "--threads",
        "1",
        "train",
        "--missing-rate",
        "0.5",
        "--seed",
        "5",
        "--out",
        path(&first),
    ];
    args.extend_from_slice(TINY);
    assert!(convrecon(&args).status.success());
    let again = dir.path().join("again");
    let o = convrecon(&[
        "--threads",
        "1",
        "train",
        "--replay",
        path(&first),
        "--out",
        path(&again),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let replayed = again.join("replay");
    for f in ["metrics.csv", "checkpoint.json", "masks/train.json"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(replayed.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn repeats_report_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--repeats", "3", "--out", path(dir.path())];
    args.extend_from_slice(TINY);
    let o = convrecon(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "seed,waf1,accuracy");
    assert_eq!(rows.len(), 6);
    assert!(rows[4].starts_with("mean,") && rows[5].starts_with("std,"));
    for s in 0..3 {
        assert!(dir.path().join(format!("seed-{s}/metrics.csv")).is_file());
    }
}

#[test]
fn excessive_missing_rate_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--missing-rate", "0.8", "--out", path(dir.path())];
    args.extend_from_slice(TINY);
    let o = convrecon(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("missing-rate protocol"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn missing_data_source_is_a_config_error() {
    let o = convrecon(&["train", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_grid_has_rate_columns_average_and_ablation_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--sweep",
        "0.0,0.7,0.9",
        "--ablate",
        "sp",
        "--ablate",
        "fre",
        "--out",
        path(dir.path()),
    ];
    args.extend_from_slice(TINY);
    let o = convrecon(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["method", "0.0", "0.7", "0.9", "Average"]);
    assert_eq!(
        rows.iter().skip(1).map(|r| r[0]).collect::<Vec<_>>(),
        ["full", "w/o Sp", "w/o Fre"]
    );
    for r in &rows[1..] {
        assert_eq!(
            r[3], "ERR",
            "0.9 exceeds the cap and must be recorded as a failed cell"
        );
        r[1].parse::<f64>().unwrap();
        r[4].parse::<f64>().unwrap();
    }
    let errors = std::fs::read_to_string(dir.path().join("errors.txt")).unwrap();
    assert_eq!(errors.lines().count(), 3);
    assert!(stdout(&o).contains("Average"));
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--out", path(dir.path())];
    args.extend_from_slice(TINY);
    assert_eq!(convrecon(&args).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_negative_controls_fail() {
    let ok = convrecon(&["gradcheck"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("composed") && stdout(&ok).contains("hypergraph"));

    let broken = convrecon(&["gradcheck", "--corrupt", "tanh"]);
    assert_eq!(broken.status.code(), Some(4));
    assert!(
        stderr(&broken).contains("has relative error"),
        "{}",
        stderr(&broken)
    );

    let strict = convrecon(&["gradcheck", "--tolerance", "1e-10"]);
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn eval_is_repeatable_and_checks_compatibility() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--out", path(&run)];
    args.extend_from_slice(TINY);
    assert!(convrecon(&args).status.success());
    let ckpt = run.join("checkpoint.json");

    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("eval{k}"));
        let mut args = vec![
            "eval",
            "--checkpoint",
            path(&ckpt),
            "--missing-rate",
            "0.3",
            "--out",
            path(&out),
        ];
        args.extend_from_slice(TINY);
        let o = convrecon(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let out = dir.path().join("mismatch");
    let mut args = vec![
        "eval",
        "--checkpoint",
        path(&ckpt),
        "--classes",
        "3",
        "--out",
        path(&out),
    ];
    args.extend_from_slice(TINY);
    let o = convrecon(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("expected 4") && err.contains("found 3"),
        "{err}"
    );
}

#[test]
fn lower_bound_evaluates_only_complete_utterances() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--out", path(&run)];
    args.extend_from_slice(TINY);
    assert!(convrecon(&args).status.success());
    let ckpt = run.join("checkpoint.json");
    let support = |lower: bool| {
        let out = dir.path().join(format!("lb{lower}"));
        let mut args = vec![
            "eval",
            "--checkpoint",
            path(&ckpt),
            "--missing-rate",
            "0.5",
            "--out",
            path(&out),
        ];
        if lower {
            args.push("--lower-bound");
        }
        args.extend_from_slice(TINY);
        let o = convrecon(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        let total: u64 = csv
            .lines()
            .filter(|l| l.starts_with("support_class"))
            .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
            .sum();
        let rate: f64 = csv
            .lines()
            .find(|l| l.starts_with("missing_rate,"))
            .unwrap()[13..]
            .parse()
            .unwrap();
        (total, rate)
    };
    let (all, rate_all) = support(false);
    let (reduced, rate_reduced) = support(true);
    assert_eq!(all, 15);
    assert!(reduced < all);
    assert!(rate_all > 0.4);
    assert_eq!(rate_reduced, 0.0);
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_convrecon"))
        .args(["synth", "--seed", "3"])
        .env("CONVRECON_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("synth-seed3/manifest.json").is_file());
}

#[test]
fn training_from_files_matches_in_memory_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(convrecon(&[
        "synth",
        "--conversations",
        "3",
        "--utterances",
        "5",
        "--seed",
        "1",
        "--out",
        path(&data)
    ])
    .status
    .success());
    let from_files = dir.path().join("files");
    let common = [
        "--epochs",
        "3",
        "--hidden",
        "4",
        "--seed",
        "1",
        "--missing-rate",
        "0.2",
    ];
    let mut a = vec!["train", "--data", path(&data), "--out", path(&from_files)];
    a.extend_from_slice(&common);
    let o = convrecon(&a);
    assert!(o.status.success(), "{}", stderr(&o));
    let in_memory = dir.path().join("memory");
    let mut b = vec![
        "train",
        "--synth",
        "--conversations",
        "3",
        "--utterances",
        "5",
        "--out",
        path(&in_memory),
    ];
    b.extend_from_slice(&common);
    assert!(convrecon(&b).status.success());
    assert_eq!(
        std::fs::read(from_files.join("metrics.csv")).unwrap(),
        std::fs::read(in_memory.join("metrics.csv")).unwrap()
    );
}
