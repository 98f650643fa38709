//! Command implementations behind the CLI: train, eval, baseline, compare.
//!
//! Every command writes its outputs atomically (temp file + rename) into the
//! output directory, plus a manifest with the config hash, the effective
//! seed and the crate version — enough to re-execute the run bit-identically.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::baselines::{run_baseline, PolicyTag};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{parse_config, Experiment};
use crate::env::episode_seed;
use crate::marl::{evaluate, train, Teams};
use crate::metrics::{compare_csv, eval_csv, summary_csv, training_csv, EpisodeMetrics};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_experiment(config_path: &Path) -> Result<Experiment> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let (_, experiment) = parse_config(&text)?;
    Ok(experiment)
}

fn write_manifest(out_dir: &Path, command: &str, config_hash: &[u8; 32], seed: u64) -> Result<()> {
    let manifest = format!(
        "command = {command}\nconfig_hash = {}\nseed = {seed}\nversion = {}\n",
        hex(config_hash),
        env!("CARGO_PKG_VERSION"),
    );
    write_atomic(&out_dir.join("manifest.txt"), &manifest)
}

fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    Ok(())
}

/// Trains on the configured scenario and writes `checkpoint.bin`,
/// `training.csv` and `manifest.txt`.
pub fn cmd_train(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut experiment = load_experiment(config_path)?;
    if let Some(seed) = seed_override {
        experiment.train.seed = seed;
    }
    prepare_out_dir(out_dir)?;
    log::info!("training: {} episodes, seed {}", experiment.train.episodes, experiment.train.seed);
    let (teams, rows) = train(&experiment.scenario, &experiment.train)?;
    write_atomic(&out_dir.join("training.csv"), &training_csv(&rows))?;
    save_checkpoint(&out_dir.join("checkpoint.bin"), &teams, experiment.config_hash, experiment.train.seed)?;
    write_manifest(out_dir, "train", &experiment.config_hash, experiment.train.seed)?;
    Ok(())
}

fn teams_from_checkpoint(experiment: &Experiment, checkpoint_path: &Path, allow_hash_mismatch: bool) -> Result<Teams> {
    let data = load_checkpoint(checkpoint_path, Some(experiment.config_hash), allow_hash_mismatch)?;
    let mut teams = data.teams.into_iter();
    let pens = teams.next().expect("validated team count");
    let rans = teams.next().expect("validated team count");
    Ok(Teams::from_nets(&experiment.scenario, pens, rans, experiment.train.replay_capacity)?)
}

/// Evaluates a trained checkpoint and writes `eval.csv` and `manifest.txt`.
pub fn cmd_eval(config_path: &Path, checkpoint_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut experiment = load_experiment(config_path)?;
    if let Some(seed) = seed_override {
        experiment.eval.seed = seed;
    }
    prepare_out_dir(out_dir)?;
    let teams = teams_from_checkpoint(&experiment, checkpoint_path, false)?;
    let metrics = evaluate(
        &teams,
        &experiment.scenario,
        experiment.eval.episodes,
        experiment.eval.max_steps,
        experiment.eval.seed,
    )?;
    write_atomic(&out_dir.join("eval.csv"), &eval_csv(&metrics))?;
    write_manifest(out_dir, "eval", &experiment.config_hash, experiment.eval.seed)?;
    Ok(())
}

/// Runs one baseline policy and writes `eval.csv` and `manifest.txt`.
pub fn cmd_baseline(config_path: &Path, policy: PolicyTag, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut experiment = load_experiment(config_path)?;
    if let Some(seed) = seed_override {
        experiment.eval.seed = seed;
    }
    prepare_out_dir(out_dir)?;
    let metrics = run_baseline(
        policy,
        &experiment.scenario,
        &experiment.baselines,
        experiment.eval.episodes,
        experiment.eval.max_steps,
        experiment.eval.seed,
    )?;
    write_atomic(&out_dir.join("eval.csv"), &eval_csv(&metrics))?;
    write_manifest(out_dir, &format!("baseline {policy}"), &experiment.config_hash, experiment.eval.seed)?;
    Ok(())
}

/// Evaluates the trained policy and all three baselines on identical seed
/// sets; writes `compare.csv`, `summary.csv` and `manifest.txt`.
pub fn cmd_compare(config_path: &Path, checkpoint_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut experiment = load_experiment(config_path)?;
    if let Some(seed) = seed_override {
        experiment.eval.seed = seed;
    }
    prepare_out_dir(out_dir)?;
    let teams = teams_from_checkpoint(&experiment, checkpoint_path, false)?;

    let episodes = experiment.eval.episodes;
    let max_steps = experiment.eval.max_steps;
    let base_seed = experiment.eval.seed;

    let mut rows: Vec<(String, u64, EpisodeMetrics)> = Vec::new();
    let trained = evaluate(&teams, &experiment.scenario, episodes, max_steps, base_seed)?;
    push_rows(&mut rows, "trained", base_seed, trained);
    for tag in PolicyTag::ALL {
        let metrics = run_baseline(tag, &experiment.scenario, &experiment.baselines, episodes, max_steps, base_seed)?;
        push_rows(&mut rows, &tag.to_string(), base_seed, metrics);
    }

    write_atomic(&out_dir.join("compare.csv"), &compare_csv(&rows))?;
    write_atomic(&out_dir.join("summary.csv"), &summary_csv(&rows))?;
    write_manifest(out_dir, "compare", &experiment.config_hash, base_seed)?;
    Ok(())
}

fn push_rows(rows: &mut Vec<(String, u64, EpisodeMetrics)>, policy: &str, base_seed: u64, metrics: Vec<EpisodeMetrics>) {
    for m in metrics {
        let seed = episode_seed(base_seed, m.episode);
        rows.push((policy.to_string(), seed, m));
    }
}

/// Sanity helper for tests: fails unless all expected output files exist.
pub fn expect_outputs(out_dir: &Path, names: &[&str]) -> Result<()> {
    for name in names {
        let path = out_dir.join(name);
        if !path.is_file() {
            bail!("missing expected output {}", path.display());
        }
    }
    Ok(())
}
