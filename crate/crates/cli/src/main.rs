//! `corrbern` command-line front end.
//!
//! Exit codes: 0 success, 1 a gating verification check failed, 2 bad
//! configuration or arguments, 3 plan rejected or resource limit, 4 I/O.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, Format};
use error::{io_error, CliError};

#[derive(Parser)]
#[command(
    name = "corrbern",
    version,
    about = "Correlated Bernoulli process: simulation, exact laws and limit-theorem checks"
)]
struct Cli {
    /// TOML configuration file (see docs/config.md).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides `experiment.master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Which files to write; overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo summaries of S_n at each checkpoint.
    Simulate,
    /// Exact law P(S_n = k) at n = experiment.horizon.
    Pmf,
    /// Exact moments of S_n and M_n at each checkpoint.
    Moments,
    /// Run the verification checks in [verify].
    Verify,
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(&path).map_err(io_error(&path))?;
    let mut cfg = Config::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.master_seed = seed;
    }
    if let Some(dir) = cli.out {
        cfg.output.directory = dir;
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    // Validate before creating any output.
    cfg.params()?;
    let out = commands::Output::new(cfg.output.directory.clone(), cfg.output.format)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out).map(|_| true),
        Command::Pmf => commands::pmf(&cfg, &out).map(|_| true),
        Command::Moments => commands::moments(&cfg, &out).map(|_| true),
        Command::Verify => {
            cfg.verify.resolve(&cfg.params()?)?;
            commands::verify(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
