//! End-to-end harness commands on the smoke config.

use std::path::PathBuf;

use multirat_core::baselines::PolicyTag;
use multirat_core::harness::{cmd_baseline, cmd_compare, cmd_eval, cmd_train, expect_outputs};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn train_eval_baseline_compare_chain() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    cmd_train(&config("smoke.toml"), &train_out, None).unwrap();
    expect_outputs(&train_out, &["training.csv", "checkpoint.bin", "manifest.txt"]).unwrap();

    let manifest = std::fs::read_to_string(train_out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = train"));
    assert!(manifest.contains("seed = 11"), "config seed recorded: {manifest}");

    // Evaluation of the fresh checkpoint runs to completion.
    let eval_out = dir.path().join("eval");
    cmd_eval(&config("smoke.toml"), &train_out.join("checkpoint.bin"), &eval_out, None).unwrap();
    expect_outputs(&eval_out, &["eval.csv", "manifest.txt"]).unwrap();
    let eval_csv = std::fs::read_to_string(eval_out.join("eval.csv")).unwrap();
    assert!(eval_csv.starts_with("episode,metric,value\n"));

    // Baselines share the eval schema.
    let base_out = dir.path().join("baseline");
    cmd_baseline(&config("smoke.toml"), PolicyTag::Aansc, &base_out, Some(5)).unwrap();
    let base_csv = std::fs::read_to_string(base_out.join("eval.csv")).unwrap();
    assert_eq!(
        eval_csv.lines().next(),
        base_csv.lines().next(),
        "baseline metrics must share the evaluation schema"
    );

    // Compare: 4 policies x eval episodes rows per metric plus the header.
    let cmp_out = dir.path().join("compare");
    cmd_compare(&config("smoke.toml"), &train_out.join("checkpoint.bin"), &cmp_out, None).unwrap();
    expect_outputs(&cmp_out, &["compare.csv", "summary.csv", "manifest.txt"]).unwrap();
    let compare = std::fs::read_to_string(cmp_out.join("compare.csv")).unwrap();
    let lines: Vec<&str> = compare.lines().collect();
    assert_eq!(lines[0], "policy,seed,metric,value");
    // smoke eval.episodes = 2, six axes, four policies.
    assert_eq!(lines.len() - 1, 4 * 2 * 6);
    for metric in ["reward", "battery_lifetime_hours", "energy_j", "latency_s", "cost", "distortion"] {
        let count = lines.iter().filter(|l| l.split(',').nth(2) == Some(metric)).count();
        assert_eq!(count, 8, "metric {metric}");
    }

    // Summary means equal the mean of the per-seed rows.
    let summary = std::fs::read_to_string(cmp_out.join("summary.csv")).unwrap();
    for policy in ["trained", "heuristic", "aansc", "onsra"] {
        let rewards: Vec<f64> = lines
            .iter()
            .filter(|l| l.starts_with(&format!("{policy},")) && l.contains(",reward,"))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let mean: f64 = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let line = summary
            .lines()
            .find(|l| l.starts_with(&format!("{policy},reward,")))
            .unwrap_or_else(|| panic!("summary row for {policy}"));
        let reported: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((reported - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn checkpoint_from_other_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let train_out = dir.path().join("train");
    cmd_train(&config("smoke.toml"), &train_out, None).unwrap();
    let err = cmd_eval(&config("desk.toml"), &train_out.join("checkpoint.bin"), &dir.path().join("eval"), None)
        .unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "{err}");
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cmd_train(&config("smoke.toml"), &a, Some(1)).unwrap();
    cmd_train(&config("smoke.toml"), &b, Some(2)).unwrap();
    let csv_a = std::fs::read(a.join("training.csv")).unwrap();
    let csv_b = std::fs::read(b.join("training.csv")).unwrap();
    assert_ne!(csv_a, csv_b);
    let manifest = std::fs::read_to_string(b.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 2"));
}
