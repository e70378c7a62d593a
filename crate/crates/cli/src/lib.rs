//! Command-line front end and annotation service for `layerbench`.

pub mod commands;
pub mod error;
pub mod service;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "layerbench", version, about = "Referring layer decomposition benchmark tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score prediction directories and write a report.
    Evaluate(commands::EvaluateArgs),
    /// Correlate report HPA scores with ledger Elo ratings.
    Correlate(commands::CorrelateArgs),
    /// Dataset statistics.
    Stats(commands::StatsArgs),
    /// Derive normalisation bounds from one or more reports.
    Bounds(commands::BoundsArgs),
    /// Simulate a pairwise study and write its ledger.
    EloSimulate(commands::EloSimulateArgs),
    /// Generate a procedural dataset and graded model outputs.
    Synth(commands::SynthArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pred_root: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Match lease lifetime in seconds.
    #[arg(long, default_value_t = layerbench::elo::DEFAULT_LEASE_TTL_SECS)]
    pub lease_ttl: i64,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs one command; the returned text is printed by the binary.
pub fn run(cli: Cli) -> Result<Option<String>, CliError> {
    match cli.command {
        Command::Evaluate(a) => commands::evaluate(&a).map(|_| None),
        Command::Correlate(a) => commands::correlate(&a).map(|_| None),
        Command::Stats(a) => commands::stats(&a).map(|_| None),
        Command::Bounds(a) => commands::bounds(&a).map(|_| None),
        Command::EloSimulate(a) => commands::elo_simulate(&a).map(|_| None),
        Command::Synth(a) => commands::synth(&a).map(Some),
        Command::Serve(a) => {
            if a.lease_ttl <= 0 {
                return Err(CliError::InvalidArgument("--lease-ttl must be positive".into()));
            }
            let config = service::ServiceConfig {
                manifest: a.manifest,
                pred_root: a.pred_root,
                ledger: a.ledger,
                models: a.models,
                lease_ttl: chrono::Duration::seconds(a.lease_ttl),
                seed: a.seed,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
            rt.block_on(service::serve(config, a.port)).map(|_| None)
        }
    }
}
