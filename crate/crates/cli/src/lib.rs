//! Command-line front end: reads a JSON run configuration, prices the
//! contract and writes JSON or CSV.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure or a failed `compare`.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Method, RunConfig};
use output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] ltbarrier::Error),
    #[error("{0}")]
    Io(String),
    #[error("comparison failed")]
    Comparison,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Engine(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ltbarrier",
    version,
    about = "Knock-out barrier option prices from barrier deltas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Override `run.n`.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Override `run.method`.
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// Override the Monte Carlo seed used by `compare`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Rounded numbers and indented JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Price at each configured spot.
    Price,
    /// Prices, deltas and gammas across the spots from one solve.
    Ladder,
    /// Barrier delta profiles on the time grid.
    Deltas,
    /// Prices and profiles across `run.n_list`, with observed orders.
    Convergence,
    /// Engine against closed forms and Monte Carlo.
    Compare,
    /// Check the configuration and classify the contract.
    Validate,
    /// Print the configuration in canonical form.
    Canonical,
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(CliError::Config)?;
    if let Some(n) = cli.n {
        cfg.run.n = n;
    }
    if let Some(m) = cli.method {
        cfg.run.method = m;
    }
    Ok(cfg)
}

/// Runs one invocation; the returned text is what was written.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let mut failed = false;
    let text = match cli.command {
        Command::Canonical => cfg.to_json(),
        cmd => {
            let report = match cmd {
                Command::Price => commands::price(&cfg)?,
                Command::Ladder => commands::ladder(&cfg)?,
                Command::Deltas => commands::deltas(&cfg)?,
                Command::Convergence => commands::convergence(&cfg)?,
                Command::Compare => {
                    let (r, pass) = commands::compare(&cfg, cli.seed)?;
                    failed = !pass;
                    r
                }
                Command::Validate => commands::validate(&cfg)?,
                Command::Canonical => unreachable!(),
            };
            report.render(cli.format, cli.pretty)
        }
    };
    match &cli.out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    if failed {
        return Err(CliError::Comparison);
    }
    Ok(text)
}

/// Parses `args` and runs, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
