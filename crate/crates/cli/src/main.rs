//! `toxlab`: batch driver for the toxlab experiment pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "toxlab", version, about = "Imbalanced chat-toxicity experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic train/val/test corpus.
    GenCorpus {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a JSON-Lines or CSV file into canonical JSON-Lines, optionally
    /// splitting it into train and val.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write a stratified train/val split.
        #[arg(long)]
        split: bool,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Class distribution and duplicate reports for the configured splits.
    Analyze,
    /// Build a filtered paraphrase pool and mix a sample into the train set.
    Augment {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model with the configured strategy.
    Train {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the LLM fine-tuning learning rate instead of `train.base_lr`.
        #[arg(long)]
        llm_lr: bool,
    },
    /// Label a dataset with one model or an ensemble.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score predictions against gold labels; with validation inputs also
    /// report the validation/test gap.
    Evaluate {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Fit post-hoc calibration on the validation set.
    Calibrate {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train one model per synthetic ratio and tabulate macro-F1.
    Sweep {
        /// Comma-separated ratios, e.g. `0,0.05,0.1`.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render an experiment ledger table.
    Ledger {
        /// JSON array of ledger rows.
        #[arg(long)]
        rows: Option<PathBuf>,
        /// Include the published reference systems.
        #[arg(long)]
        reference: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
