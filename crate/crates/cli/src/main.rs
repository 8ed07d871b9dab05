use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod svg;

/// Batch runner for equivalence checks, representativity evaluation and the
/// consensus experiment.
///
/// Exit codes: 0 success, 1 property violation, 2 usage or configuration error.
#[derive(Parser, Debug)]
#[command(name = "reprsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config for the subcommand; built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify candidate profiles into the three equivalence classes and
    /// check the inclusion chain and the strictness construction.
    #[command(after_long_help = commands::verify::HELP)]
    VerifyProp1,
    /// Generate the synthetic consensus dataset, fit critique models and
    /// report likelihood, win rate and substitution discrepancy.
    #[command(after_long_help = commands::consensus::HELP)]
    Consensus,
    /// Representativity of candidate profiles against a target process.
    #[command(after_long_help = commands::representativity::HELP)]
    Representativity,
}

pub struct Options {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// What a command found, as opposed to failing to run.
pub enum Outcome {
    Ok,
    Violation(String),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let opts = Options {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
    };
    match cli.command {
        Command::VerifyProp1 => commands::verify::run(&opts),
        Command::Consensus => commands::consensus::run(&opts),
        Command::Representativity => commands::representativity::run(&opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
