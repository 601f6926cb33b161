//! Command-line front end: configuration files, the five subcommands and run
//! manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, Flags};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "lens",
    version,
    about = "Train and evaluate LENS response models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Generate 50,000 students instead of the configured count.
    #[arg(long, global = true)]
    pub paper_scale: bool,

    /// Permute item texts within each skill before embedding them.
    #[arg(long, global = true)]
    pub ablate_difficulty_shuffle: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Simulate an item bank, students and responses.
    GenData,
    /// Train one model.
    Train,
    /// Hyperparameter search, then retrain the best point.
    Grid,
    /// Evaluate checkpoints on the held-out conditions.
    Eval,
    /// Merge evaluation results into a table and plot data.
    Report,
}

impl Cli {
    /// The configuration file with command-line overrides applied.
    pub fn experiment(&self) -> CliResult<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::invalid("--config <FILE> is required"))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.flags = Flags {
            paper_scale: self.paper_scale,
            ablate_difficulty_shuffle: self.ablate_difficulty_shuffle,
        };
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.experiment()?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Grid => commands::grid(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Report => commands::report_cmd(&cfg),
    }
}
