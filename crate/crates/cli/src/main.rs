//! `mmkg`: ingestion, splitting, rule mining, training, evaluation,
//! baselines and synthetic data for multi-modal KG alignment.
//!
//! Failures end with one stderr line `mmkg: error kind=<kind> message=<text>`.
//! Exit status is 2 for usage and config errors, 1 for I/O errors and 3 for
//! everything else (bad data, divergence, corrupt snapshots).

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] mmkg_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    fn kind(&self) -> &'static str {
        use mmkg_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } | CliError::Core(E::Io { .. }) => "io",
            CliError::Core(E::NTriples(_)) => "parse",
            CliError::Core(E::Format { .. } | E::DimensionMismatch { .. }) => "format",
            CliError::Core(E::Invalid(_)) => "invalid",
            CliError::Core(E::Snapshot(_)) => "snapshot",
            CliError::Core(E::NonFiniteLoss { .. }) => "non-finite-loss",
            CliError::Core(E::Diverged { .. }) => "diverged",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "usage" => 2,
            "io" => 1,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmkg", version, about = "Multi-modal knowledge-graph alignment with a product of experts")]
struct Cli {
    /// More log output (-v info, -vv debug); logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command that records an effective config.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Skip malformed lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a KG pair and write a store snapshot.
    Ingest(commands::IngestArgs),
    /// Print entity, relation, triple and attribute statistics.
    Stats(commands::StatsArgs),
    /// Split the alignments into train/valid/test.
    Split(commands::SplitArgs),
    /// Mine cross-KG Horn rules from the training alignments.
    Mine(commands::MineArgs),
    /// Train a product-of-experts model.
    Train(commands::TrainArgs),
    /// Rank the test alignments with a trained model.
    Eval(commands::EvalArgs),
    /// Train and evaluate the Concat or Ensemble baseline.
    Baseline(commands::BaselineArgs),
    /// Generate a synthetic KG pair with planted alignments.
    Synth(commands::SynthArgs),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("mmkg: error kind=usage message={}", one_line(&first));
            return ExitCode::from(2);
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Stats(a) => commands::stats(a),
        Command::Split(a) => commands::split(a),
        Command::Mine(a) => commands::mine(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmkg: error kind={} message={}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(e.exit_code())
        }
    }
}
