//! Command-line front end for the truncated Poisson sampled Gaussian
//! accountant: single queries, tradeoff curves, noise calibration, the
//! comparison against the generic truncation bound, and sampler checks.
//!
//! Every command prints one JSON document (or CSV table) on standard output.
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when the
//! numerics fail.

use std::fmt;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

use config::{Format, JobArgs, JobConfig};

type Runner = fn(&JobConfig) -> Result<output::Record, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "tpdp",
    version,
    about = "Privacy accounting for the truncated Poisson sampled Gaussian sum"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// delta at a given epsilon (--epsilon).
    Delta(JobArgs),
    /// Smallest epsilon at a given delta (--delta).
    Epsilon(JobArgs),
    /// Tight and naive delta over an epsilon grid (--epsilons).
    Curve(JobArgs),
    /// Smallest noise multiplier meeting (--epsilon, --delta).
    Calibrate(JobArgs),
    /// Calibrate both the tight accountant and the generic truncation bound.
    Compare(JobArgs),
    /// Check the two sampling procedures against each other (--trials, --seed).
    Simulate(JobArgs),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tpdp_core::Error> for CliError {
    fn from(e: tpdp_core::Error) -> Self {
        use tpdp_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::Domain(_) | E::TooLarge { .. } => CliError::Usage(e.to_string()),
            E::BranchAbsent | E::GridMismatch | E::Uncalibratable | E::ComparisonInverted { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

/// Runs one parsed invocation and returns the rendered output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let (args, run): (&JobArgs, Runner) = match &cli.command {
        Command::Delta(a) => (a, commands::delta),
        Command::Epsilon(a) => (a, commands::epsilon),
        Command::Curve(a) => (a, commands::curve),
        Command::Calibrate(a) => (a, commands::calibrate),
        Command::Compare(a) => (a, commands::compare_cmd),
        Command::Simulate(a) => (a, commands::simulate),
    };
    let config = JobConfig::resolve(args)?;
    let record = run(&config)?;
    Ok(match config.format {
        Format::Json => output::to_json(&record),
        Format::Csv => output::to_csv(&record),
    })
}
