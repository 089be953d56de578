//! `rprm`: drive the retrieval-augmented verification pipeline end to end.
//!
//! Everything that affects outputs lives in the run-config file; the
//! command line only selects a command and the config path. Exit codes:
//! 0 success, 1 validation error, 2 provider failure.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
pub use error::CliError;

#[derive(Parser)]
#[command(
    name = "rprm",
    about = "Retrieval-augmented process reward model pipeline"
)]
struct Cli {
    /// Run-config file (TOML).
    #[arg(long, global = true, default_value = "rprm.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed all pool questions and steps, writing the vector files.
    Embed,
    /// Fit the per-space PCA models on the embedded pool.
    FitPca,
    /// Build the exact-search question index in reduced space.
    Index,
    /// Expand the train corpus into retrieval-enhanced training records.
    BuildDataset,
    /// Run first-error localization over the eval files, writing traces.
    Score,
    /// Score plus metrics: per-dataset accuracies, F1, ArithACC, Avg.F1.
    Evaluate,
    /// Re-run the evaluation once per configured k value.
    Sweep,
    /// Export a 2-d PCA projection of the question pool as CSV.
    #[command(name = "project-2d")]
    Project2d,
}

async fn dispatch(command: &Command, config: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Embed => commands::embed::run(config).await,
        Command::FitPca => commands::fit_pca::run(config).await,
        Command::Index => commands::index::run(config).await,
        Command::BuildDataset => commands::build_dataset::run(config).await,
        Command::Score => commands::score::run(config).await,
        Command::Evaluate => commands::evaluate::run(config).await,
        Command::Sweep => commands::sweep::run(config).await,
        Command::Project2d => commands::project_2d::run(config).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match RunConfig::load(&cli.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cli.command, &config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
