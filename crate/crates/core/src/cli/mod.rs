//! Command-line front end: `sample`, `decode`, `diagnose` and `ber`.
//!
//! Configuration is a flat `key = value` file (`--config`) with repeatable
//! `--set key=value` overrides. A seed is mandatory, from `--seed` or the
//! `seed` key. Output goes to `--out` (or the `out` key), else stdout.
//!
//! Exit codes: 0 success, 1 validation or I/O error, 2 numerical or
//! capacity error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::error::LatticeError;
pub use config::{Config, ConfigError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Lattice(#[from] LatticeError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lattice(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lattice-mcmc",
    version,
    about = "Lattice Gaussian MCMC sampling, CVP decoding and MIMO detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw chain samples spaced by the mixing-time bound.
    Sample(RunArgs),
    /// Decode one query point.
    Decode(RunArgs),
    /// Exact small-instance convergence report.
    Diagnose(RunArgs),
    /// MIMO BER sweep, written as CSV.
    Ber(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the `seed` key).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn load_config(args: &RunArgs) -> Result<(Config, u64, PathBuf), CliError> {
    let (mut cfg, base_dir) = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            (
                Config::parse(&text)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            )
        }
        None => (Config::default(), PathBuf::from(".")),
    };
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    let seed = match args.seed {
        Some(s) => s,
        None => cfg.get_required::<u64>("seed").map_err(|e| match e {
            ConfigError::Missing(_) => {
                CliError::Usage("a seed is required (--seed N or seed=N)".into())
            }
            other => other.into(),
        })?,
    };
    Ok((cfg, seed, base_dir))
}

/// Runs one subcommand and returns its output text.
pub fn execute(command: &Command) -> Result<(String, Option<PathBuf>), CliError> {
    let args = match command {
        Command::Sample(a) | Command::Decode(a) | Command::Diagnose(a) | Command::Ber(a) => a,
    };
    let (cfg, seed, base_dir) = load_config(args)?;
    let out_path = args
        .out
        .clone()
        .or_else(|| cfg.raw("out").map(PathBuf::from));
    let text = match command {
        Command::Sample(_) => commands::cmd_sample(&cfg, seed, &base_dir)?,
        Command::Decode(_) => commands::cmd_decode(&cfg, seed, &base_dir)?,
        Command::Diagnose(_) => commands::cmd_diagnose(&cfg, seed, &base_dir)?,
        Command::Ber(_) => commands::cmd_ber(&cfg, seed)?,
    };
    Ok((text, out_path))
}

/// Full entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = execute(&cli.command).and_then(|(text, path)| match path {
        Some(p) => {
            std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
