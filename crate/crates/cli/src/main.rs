//! Command line front end. Exit codes: 0 success, 1 configuration or I/O
//! error, 2 numerical failure, 3 validation suite failure.

mod commands;
mod config;
mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use difflatent::Result;

#[derive(Parser)]
#[command(
    name = "difflatent",
    version,
    about = "Extracts modality-specific latent variables from paired datasets and reproduces the desk-scale experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write one clean dataset to disk
    Generate(RunArgs),
    /// Build the results table sequentially
    Run(RunArgs),
    /// Build the results table with a worker pool and progress reporting
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Concurrent sweep points
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the numerical validation suites
    Validate {
        /// fast = inequality and invariant suites; full adds convergence traces
        #[arg(long, default_value = "fast")]
        level: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Aggregate *_scores.csv tables under the output directory
    Report {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<(config::RunConfig, &Path)> {
    let mut cfg = config::load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    Ok((cfg, args.out.as_path()))
}

/// Ok(false) marks a completed run whose validation checks failed.
fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(args) => {
            let (cfg, out) = load(&args)?;
            commands::generate(&cfg, out, args.seed)?;
        }
        Command::Run(args) => {
            let (cfg, out) = load(&args)?;
            commands::run(&cfg, out)?;
        }
        Command::Sweep { args, workers } => {
            let (cfg, out) = load(&args)?;
            commands::sweep(&cfg, out, workers.max(1))?;
        }
        Command::Validate { level, seed, out } => {
            return commands::validate(&level, seed, &out);
        }
        Command::Report { out } => commands::report(&out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
