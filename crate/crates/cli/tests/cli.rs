//! Black-box checks of the `multirat` binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multirat"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn help_lists_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["train", "eval", "baseline", "compare"] {
        assert!(text.contains(sub), "missing subcommand {sub}");
    }
}

#[test]
fn unknown_policy_tag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["baseline", "--config"])
        .arg(config("smoke.toml"))
        .args(["--out"])
        .arg(dir.path())
        .args(["--policy", "bogus"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("heuristic") && err.contains("aansc") && err.contains("onsra"), "{err}");
}

#[test]
fn train_subcommand_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(config("smoke.toml"))
        .args(["--out"])
        .arg(dir.path())
        .env("MULTIRAT_LOG_LEVEL", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["training.csv", "checkpoint.bin", "manifest.txt"] {
        assert!(dir.path().join(file).is_file(), "missing {file}");
    }
}

#[test]
fn invalid_config_fails_with_named_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("smoke.toml")).unwrap().replace("gamma = 0.95", "gamma = 1.5");
    std::fs::write(&bad, text).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&bad)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("discount factor must be < 1"), "{err}");
}
