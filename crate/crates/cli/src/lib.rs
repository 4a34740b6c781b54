//! Experiment runner behind the `qnav` binary.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on configuration or
//! usage errors.

pub mod bench;
pub mod busdemo;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod payload;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "qnav", version, about = "Quantum navigation experiments")]
pub struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint to evaluate; defaults to `<out>/checkpoint.txt`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Train a policy; writes metrics.csv, timings.csv and checkpoint.txt.
    Train,
    /// Greedy return of a checkpoint against a uniform random policy.
    Eval,
    /// Degradation sweep over the configured attacks and budgets.
    Attack,
    /// One sensor and one processor driving an episode over the secure bus.
    BusDemo,
    /// Per-stage latency of secured decision ticks.
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Attack => "attack",
            Command::BusDemo => "bus-demo",
            Command::Bench => "bench",
        }
    }
}

/// Config file plus command-line overrides, validated.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    let out = config.output_dir.clone();
    let ckpt = commands::checkpoint_path(&out, cli.checkpoint.as_ref());
    log::info!("{} (seed {}, config {})", cli.command.name(), config.rng_seed, &config.sha256()[..16]);
    match cli.command {
        Command::Train => commands::cmd_train(&config, &out),
        Command::Eval => commands::cmd_eval(&config, &out, &ckpt),
        Command::Attack => commands::cmd_attack(&config, &out, &ckpt),
        Command::BusDemo | Command::Bench => {
            let (policy, used) = match &cli.checkpoint {
                Some(path) => (commands::load_policy(&config, path)?, Some(path.as_path())),
                None => (config.initial_policy()?, None),
            };
            if let Command::Bench = cli.command {
                bench::cmd_bench(&config, &out, &policy, used).map(|_| ())
            } else {
                busdemo::cmd_bus_demo(&config, &out, &policy, used).map(|_| ())
            }
        }
    }
}
