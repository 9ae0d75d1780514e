//! Command-line driver for the certified continuity-only solvers.
//!
//! Three subcommands share one JSON config format:
//!   certify  build a certificate for the configured problem and rate target
//!   solve    run the requested solvers and check their traces
//!   sweep    scan an (alpha, q) grid and record observed Newton rates
//!
//! Exit codes partition the failure modes: 1 config or I/O, 2 certification,
//! 3 non-convergence, 4 certified-bound violations. Traces and reports are
//! written even for failing runs.

mod config;
mod runner;

use clap::{Parser, Subcommand};
use runner::RunContext;
use std::fmt;
use std::path::{Path, PathBuf};

const SEED_ENV: &str = "NEWTON_UNIVERSAL_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad parameters, or I/O trouble.
    Config(String),
    /// No certificate exists for the request, or the certificate forbids it.
    Certification(String),
    /// A requested solver stopped without reaching tolerance.
    NonConvergence(String),
    /// A certified bound was violated by observed data.
    BoundViolation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Certification(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::BoundViolation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg)
            | CliError::Certification(msg)
            | CliError::NonConvergence(msg)
            | CliError::BoundViolation(msg) => f.write_str(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "newton-universal", version, about = "Certified Newton-type solvers for merely continuous derivatives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for traces, reports, and certificates (default: config value or ".")
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// RNG seed (default: config value, then the NEWTON_UNIVERSAL_SEED env var, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output on stdout
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the configured problem at the requested contraction rate
    Certify { config: PathBuf },
    /// Run the configured solvers and check their traces against the certificate
    Solve { config: PathBuf },
    /// Scan an (alpha, q) grid and record observed Newton convergence rates
    Sweep { config: PathBuf },
}

fn seed_from_env() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            CliError::Config(format!(
                "{SEED_ENV} must be an unsigned integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn make_context(cli: &Cli, config_path: &Path) -> Result<RunContext, CliError> {
    let cfg = config::RunConfig::load(config_path)?;
    let seed = match cli.seed.or(cfg.rng_seed) {
        Some(s) => s,
        None => seed_from_env()?,
    };
    let out_dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    Ok(RunContext {
        cfg,
        out_dir,
        seed,
        quiet: cli.quiet,
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Certify { config } => runner::cmd_certify(&make_context(cli, config)?),
        Command::Solve { config } => runner::cmd_solve(&make_context(cli, config)?),
        Command::Sweep { config } => runner::cmd_sweep(&make_context(cli, config)?),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
