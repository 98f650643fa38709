//! `multirat`: train the two-team policy-gradient agents, evaluate trained
//! checkpoints, run the classical baselines, and emit comparison tables.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use multirat_core::baselines::PolicyTag;
use multirat_core::harness;

#[derive(Parser)]
#[command(name = "multirat", version, about = "Multi-RAT network selection simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train both teams and write a checkpoint plus the training log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoint.bin, training.csv, manifest.txt.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the training seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Noise-free rollouts of a trained checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the evaluation seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one classical baseline policy in the same environment.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which baseline to run.
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the trained policy and all baselines on identical seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Heuristic,
    Aansc,
    Onsra,
}

impl From<PolicyArg> for PolicyTag {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Heuristic => PolicyTag::Heuristic,
            PolicyArg::Aansc => PolicyTag::Aansc,
            PolicyArg::Onsra => PolicyTag::Onsra,
        }
    }
}

fn init_logging() {
    let level = std::env::var("MULTIRAT_LOG_LEVEL").unwrap_or_else(|_| "info".to_string());
    let filter = match level.as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            eprintln!("MULTIRAT_LOG_LEVEL must be one of error, info, debug (got {other:?}); using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new().filter_level(filter).init();
}

fn main() -> anyhow::Result<()> {
    init_logging();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, out, seed } => harness::cmd_train(&config, &out, seed),
        Command::Eval { config, checkpoint, out, seed } => harness::cmd_eval(&config, &checkpoint, &out, seed),
        Command::Baseline { config, out, policy, seed } => harness::cmd_baseline(&config, policy.into(), &out, seed),
        Command::Compare { config, checkpoint, out, seed } => harness::cmd_compare(&config, &checkpoint, &out, seed),
    }
}
