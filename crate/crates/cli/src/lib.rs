//! Pipeline driver behind the `nrba` binary.

pub mod config;
pub mod error;
pub mod logger;
pub mod manifest;
pub mod report;
pub mod simulate;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, StageRecord};
pub use stages::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "nrba", version, about = "Longitudinal nonresponse bias analysis")]
pub struct Cli {
    /// Run configuration (scenario file for `simulate`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print progress messages.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Response pattern tables and nonresponse rates.
    Pattern,
    /// Attrition weights and their diagnostics.
    Weights,
    /// Sequential multiple imputation.
    Impute,
    /// Method comparison table.
    Estimate,
    /// Offset sensitivity imputations and table.
    Sensitivity,
    /// Simulate a synthetic cohort with known truth.
    Simulate,
    /// Markdown report from the estimate outputs.
    Report,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let config = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    if cli.command == Command::Simulate {
        return simulate::cmd_simulate(config, cli.seed, cli.out.as_deref());
    }
    let cfg = RunConfig::load(config, cli.seed, cli.out.as_deref())?;
    let mut p = Pipeline::open(cfg)?;
    match cli.command {
        Command::Pattern => p.pattern(),
        Command::Weights => p.weights(),
        Command::Impute => p.impute(),
        Command::Estimate => p.estimate(),
        Command::Sensitivity => p.sensitivity(),
        Command::Report => p.report(),
        Command::Simulate => unreachable!(),
    }
}
