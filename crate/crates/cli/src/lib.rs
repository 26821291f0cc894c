//! Command implementations behind the `gramgap` binary.
//!
//! Exit codes: 0 ok, 2 config, 3 numeric, 4 verification failure,
//! 5 statistically inconclusive.

// `!(a <= b)` is deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Density,
    Support,
    Verify,
    Scaling,
    Selftest,
}

#[derive(Debug, Parser)]
#[command(
    name = "gramgap",
    version,
    about = "Deterministic-equivalent spectra and Monte Carlo gap checks"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run config. Optional for `selftest` only.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `out_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, overrides `workers` in the config.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Top-level seed, overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Inconclusive(_) => 5,
        }
    }
}

impl From<gramgap_core::Error> for CliError {
    fn from(e: gramgap_core::Error) -> Self {
        use gramgap_core::Error as E;
        match &e {
            E::SignalBelowNoise { .. } => CliError::Inconclusive(e.to_string()),
            E::InequalityViolation(_) | E::DominanceViolation { .. } => {
                CliError::Verification(e.to_string())
            }
            _ if e.is_numeric() => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// Loads and validates the config, applies flag overrides and runs the
/// command on a pool of the requested size.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (mut cfg, base_dir) = match &cli.config {
        Some(path) => (
            RunConfig::load(path)?,
            path.parent().map(|p| p.to_path_buf()),
        ),
        None if cli.command == Command::Selftest => (RunConfig::default(), None),
        None => {
            return Err(CliError::Config(
                "--config is required for this command".into(),
            ))
        }
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    cfg.validate()?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let ctx = commands::Context {
        config: cfg,
        base_dir,
        out_dir,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = ctx.config.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Density => commands::density(&ctx),
        Command::Support => commands::support(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Scaling => commands::scaling(&ctx),
        Command::Selftest => commands::selftest(&ctx),
    })
}
