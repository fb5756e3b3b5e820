//! Command-line driver: configuration, the four verbs and exit codes.
//!
//! Exit status: 0 success, 2 invalid configuration or input file, 3
//! computation failure (including any failed n of a sweep), 4 I/O failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Overrides, RunConfig};
use rydberg_eit::Error;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_COMPUTATION: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("computation failed: {0}")]
    Computation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} sweep points failed (see the report)")]
    SweepFailures { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn from_core(e: Error) -> Self {
        Self::classify(e, None)
    }

    /// Like [`CliError::from_core`], with the offending file named.
    pub fn in_file(path: &Path, e: Error) -> Self {
        Self::classify(e, Some(path))
    }

    fn classify(e: Error, path: Option<&Path>) -> Self {
        let msg = match path {
            Some(p) => format!("{}: {e}", p.display()),
            None => e.to_string(),
        };
        match e {
            Error::Config { .. }
            | Error::MissingKey(_)
            | Error::UnknownKey(_)
            | Error::Format { .. }
            | Error::Range { .. }
            | Error::UnsupportedGeometry(_) => CliError::Validation(msg),
            Error::Io(source) => CliError::Io {
                path: path.map(Path::to_path_buf).unwrap_or_default(),
                source,
            },
            _ => CliError::Computation(msg),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Computation(_) | CliError::SweepFailures { .. } => EXIT_COMPUTATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rydberg-eit",
    version,
    about = "Synthesise and analyse velocity-selective Rydberg EIT spectra"
)]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for all outputs; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Seed for the optional measurement noise; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the excitation-pathway table for the configured n and series.
    PredictPeaks,
    /// Synthesise one transmission trace.
    Simulate,
    /// Fit trace files and write the splitting report.
    Analyze {
        #[arg(required = true, value_name = "TRACE")]
        traces: Vec<PathBuf>,
    },
    /// Simulate and analyse every n of `sweep_n_min..=sweep_n_max`.
    SweepN,
}

/// Runs one invocation and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let overrides = Overrides {
        config_file: cli.config.clone(),
        set: cli.set.clone(),
        output_dir: cli.output_dir.clone(),
        seed: cli.seed,
    };
    let cfg = RunConfig::load(&overrides).map_err(CliError::from_core)?;
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    say(format!("config sha256 {}", cfg.digest()));

    match &cli.command {
        Command::PredictPeaks => output::write_all(&cfg.output_dir, &commands::predict_peaks(&cfg)?),
        Command::Simulate => {
            say(format!("simulating n={} {:?}", cfg.n, series_labels(&cfg)));
            output::write_all(&cfg.output_dir, &commands::simulate(&cfg)?)
        }
        Command::Analyze { traces } => {
            say(format!("analysing {} trace(s)", traces.len()));
            output::write_all(&cfg.output_dir, &commands::analyze(&cfg, traces)?)
        }
        Command::SweepN => {
            let ns = cfg.sweep_values();
            say(format!("sweeping n = {:?}", ns));
            let outcome = commands::sweep_n(&cfg);
            let written = output::write_all(&cfg.output_dir, &outcome.artifacts)?;
            if outcome.failed > 0 {
                return Err(CliError::SweepFailures {
                    failed: outcome.failed,
                    total: outcome.total,
                });
            }
            Ok(written)
        }
    }
}

fn series_labels(cfg: &RunConfig) -> Vec<String> {
    cfg.series.iter().map(|s| s.to_string()).collect()
}
