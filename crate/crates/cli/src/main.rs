//! Batch pipeline driver. Subcommands cover the full workflow: generate a
//! synthetic cohort, train the segmentation network, segment the cohort,
//! evaluate held-out subjects, and produce the statistics report.
//!
//! Exit codes: 0 success, 2 usage/input error, 3 numeric failure.

mod commands;
mod config;
mod paths;
mod svg;

use clap::{Parser, Subcommand};
use config::{RunConfig, Scale};
use muscleseg_core::autograd::AutogradError;
use muscleseg_core::phantom::PhantomError;
use muscleseg_core::trainer::TrainerError;
use muscleseg_core::vnet::VnetError;
use muscleseg_core::voxgrid::VoxError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<VoxError> for CliError {
    fn from(e: VoxError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<VnetError> for CliError {
    fn from(e: VnetError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<muscleseg_core::prep::PrepError> for CliError {
    fn from(e: muscleseg_core::prep::PrepError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<muscleseg_core::cohortstats::StatsError> for CliError {
    fn from(e: muscleseg_core::cohortstats::StatsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainerError::Autograd(AutogradError::NonFinite(_)) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "muscleseg",
    about = "Volumetric muscle segmentation pipeline on synthetic phantom cohorts",
    version
)]
struct Cli {
    /// Flat key=value configuration file ('#' comments allowed)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for all artifacts
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Model/crop scale: 'desk' or 'paper'
    #[arg(long, global = true)]
    scale: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cohort (CSV + image/mask volumes + landmarks)
    CohortGen,
    /// Train the segmentation network on the leading subjects
    Train,
    /// Segment every subject with the trained checkpoint
    Segment,
    /// Evaluate held-out subjects and write per-subject DSC
    Eval,
    /// Produce summary tables, scatter/agreement plots, and the JSON report
    Stats,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workdir) = cli.workdir {
        cfg.workdir = workdir;
    }
    if let Some(scale) = &cli.scale {
        cfg.scale = Scale::parse(scale)?;
    }
    match cli.command {
        Command::CohortGen => commands::cohort_gen::run(&cfg),
        Command::Train => commands::train::run(&cfg),
        Command::Segment => commands::segment::run(&cfg),
        Command::Eval => commands::eval::run(&cfg),
        Command::Stats => commands::stats::run(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            3
        }
    };
    std::process::exit(code);
}
