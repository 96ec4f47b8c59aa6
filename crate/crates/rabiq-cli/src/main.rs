//! `rabiq` — configuration-driven front end for the quench / tomography /
//! calibration pipelines in the `rabiq` library.
//!
//! Exit codes: 0 success, 2 configuration error (parse or validation),
//! 3 numerical failure, 1 I/O failure. Runs are deterministic: the same
//! config produces byte-identical output directories, and all stochastic
//! steps draw from seeds recorded in the config (overridable with `--seed`).

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{render_errors, Config, ConfigError};

#[derive(Parser)]
#[command(
    name = "rabiq",
    version,
    about = "Quench dynamics, displaced-parity tomography, and phase calibration runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a quench schedule; write observable series and state snapshots.
    Quench(RunArgs),
    /// Run the tomography chain on snapshots or a synthetic cat state.
    Tomography(RunArgs),
    /// Scan the slow-tone phase and report the fitted optimum.
    Calibrate(RunArgs),
    /// Parse and validate a config, printing a line-numbered error report.
    ValidateConfig(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override every noise seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
}

/// Command-level failure with its documented exit code.
pub enum AppError {
    /// Exit 2: the config could not be parsed or failed validation.
    Config(String),
    /// Exit 3: a simulation or fitting step failed.
    Numeric(String),
    /// Exit 1: output files could not be written.
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numeric(_) => 3,
            AppError::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Numeric(m) | AppError::Io(m) => m,
        }
    }

    pub fn config(cfg: &Config, errors: Vec<ConfigError>) -> Self {
        AppError::Config(render_errors(&cfg.path, &errors))
    }
}

impl From<rabiq::Error> for AppError {
    fn from(e: rabiq::Error) -> Self {
        AppError::Numeric(format!("numerical failure: {e}"))
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(format!("output failure: {e}"))
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Quench(args) => {
            let cfg = load(&args)?;
            init_threads(args.threads)?;
            commands::quench::run(&cfg, &args.out)
        }
        Command::Tomography(args) => {
            let cfg = load(&args)?;
            init_threads(args.threads)?;
            commands::tomography::run(&cfg, &args.out, args.seed)
        }
        Command::Calibrate(args) => {
            let cfg = load(&args)?;
            init_threads(args.threads)?;
            commands::calibrate::run(&cfg, &args.out, args.seed)
        }
        Command::ValidateConfig(args) => {
            let cfg = Config::load(&args.config).map_err(AppError::Config)?;
            let sections = cfg.validate_all().map_err(|es| AppError::config(&cfg, es))?;
            println!("{}: OK ({})", cfg.path, sections.join(", "));
            Ok(())
        }
    }
}

fn load(args: &RunArgs) -> Result<Config, AppError> {
    Config::load(&args.config).map_err(AppError::Config)
}

fn init_threads(threads: Option<usize>) -> Result<(), AppError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| AppError::Io(format!("thread pool: {e}")))?;
    }
    Ok(())
}
