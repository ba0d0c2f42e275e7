use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cs_lab_core::CsError;

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Resource(String),
    NotConverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Resource(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Resource(m) => write!(f, "resource limit: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<CsError> for CliError {
    fn from(e: CsError) -> Self {
        match e {
            CsError::SizeLimit(_) | CsError::EnumerationCap { .. } | CsError::ScanCap { .. } => {
                CliError::Resource(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cs-lab",
    version,
    about = "Walsh sampling and wavelet recovery experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid depth used for cell averages
    #[arg(long, global = true)]
    quality: Option<u32>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reconstruction mode: infinite, finite or series
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    theta_target: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    c_univ: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Local coherences and their ratio table
    Coherence,
    /// Smallest oversampling meeting a balancing target
    Balancing,
    /// G-RIPL constants over a seed sweep of patterns
    Ripl,
    /// Samples per level from the sampling condition
    Allocate,
    /// Recover a signal from Walsh samples
    Reconstruct,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Coherence => "coherence",
            Command::Balancing => "balancing",
            Command::Ripl => "ripl",
            Command::Allocate => "allocate",
            Command::Reconstruct => "reconstruct",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.quality {
        cfg.quality = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &cli.mode {
        cfg.reconstruct.mode = v.clone();
    }
    if let Some(v) = cli.theta_target {
        cfg.balancing.theta_target = v;
    }
    if let Some(v) = cli.delta {
        cfg.allocation.delta = v;
    }
    if let Some(v) = cli.eps {
        cfg.allocation.eps = v;
    }
    if let Some(v) = cli.c_univ {
        cfg.allocation.c_univ = v;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    commands::run(cli.command.name(), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cs-lab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
