//! `narralyze`: batch pipeline from writing samples to cross-validated layer
//! comparisons and feature attributions.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing {path}: run `narralyze {producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact { .. } => 1,
            CliError::Provider(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "narralyze", version, about = "Multi-level analysis of therapeutic writing samples")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; required here or in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Serve provider calls from the cache only.
    #[arg(long, global = true)]
    offline: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted signal.
    Synth,
    /// Validate a JSONL corpus and copy its eligible samples to the output.
    Ingest {
        /// Corpus to read; defaults to `paths.corpus`.
        input: Option<PathBuf>,
    },
    /// Extract lexical and coherence layers and assemble the feature matrix.
    Extract,
    /// Run the narrative evaluation protocols.
    Evaluate,
    /// Cross-validate every feature combination and fit the final models.
    Train,
    /// Attribute final-model predictions to features.
    Explain,
    /// Render the comparison table and radar data.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        offline: cli.offline,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    cfg.write_snapshot()?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Ingest { input } => commands::ingest(&cfg, input.as_deref()),
        Command::Extract => commands::extract(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Explain => commands::explain(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
