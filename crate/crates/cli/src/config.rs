//! Job configuration: command-line flags layered over an optional JSON file.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use tpdp_core::{AccountingOptions, Adjacency, DirectionPolicy, Estimate};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct JobArgs {
    /// Dataset size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Per-example sampling probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Maximum batch size.
    #[arg(long = "B")]
    pub max_batch: Option<u64>,
    /// Noise multiplier (standard deviation over sensitivity).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of composed steps [default: 1].
    #[arg(long)]
    pub steps: Option<u64>,
    /// Neighbouring relation: add-remove, zero-out or replace-one [default: add-remove].
    #[arg(long)]
    pub adjacency: Option<Adjacency>,
    /// Privacy-loss grid width [default: 1e-4].
    #[arg(long = "grid-step")]
    pub grid_step: Option<f64>,
    /// Target or query epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Target or query delta.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Domination direction: max, forward or reverse [default: max].
    #[arg(long)]
    pub direction: Option<DirectionPolicy>,
    /// Discretization: pessimistic or optimistic [default: pessimistic].
    #[arg(long)]
    pub estimate: Option<Estimate>,
    /// Output format [default: json].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Seed for the simulation stream [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of simulated draws per procedure.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Comma-separated epsilon grid for `curve`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// JSON file supplying any of the keys above (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a config file; `B` and `grid_step` mirror the flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<u64>,
    p: Option<f64>,
    #[serde(rename = "B")]
    max_batch: Option<u64>,
    sigma: Option<f64>,
    steps: Option<u64>,
    adjacency: Option<String>,
    grid_step: Option<f64>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    direction: Option<String>,
    estimate: Option<String>,
    format: Option<Format>,
    seed: Option<u64>,
    trials: Option<u64>,
    epsilons: Option<Vec<f64>>,
}

/// Fully merged job description.
#[derive(Clone, Debug, PartialEq)]
pub struct JobConfig {
    pub n: Option<u64>,
    pub p: Option<f64>,
    pub max_batch: Option<u64>,
    pub sigma: Option<f64>,
    pub steps: u64,
    pub adjacency: Adjacency,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub options: AccountingOptions,
    pub format: Format,
    pub seed: u64,
    pub trials: Option<u64>,
    pub epsilons: Option<Vec<f64>>,
}

fn parse_key<T: std::str::FromStr<Err = tpdp_core::Error>>(value: Option<String>) -> Result<Option<T>, CliError> {
    value.map(|v| v.parse().map_err(CliError::from)).transpose()
}

impl JobConfig {
    pub fn resolve(args: &JobArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let defaults = AccountingOptions::default();
        let options = AccountingOptions {
            grid_step: args.grid_step.or(file.grid_step).unwrap_or(defaults.grid_step),
            direction: match args.direction {
                Some(d) => d,
                None => parse_key(file.direction)?.unwrap_or(defaults.direction),
            },
            estimate: match args.estimate {
                Some(e) => e,
                None => parse_key(file.estimate)?.unwrap_or(defaults.estimate),
            },
        };
        Ok(Self {
            n: args.n.or(file.n),
            p: args.p.or(file.p),
            max_batch: args.max_batch.or(file.max_batch),
            sigma: args.sigma.or(file.sigma),
            steps: args.steps.or(file.steps).unwrap_or(1),
            adjacency: match args.adjacency {
                Some(a) => a,
                None => parse_key(file.adjacency)?.unwrap_or(Adjacency::AddRemove),
            },
            epsilon: args.epsilon.or(file.epsilon),
            delta: args.delta.or(file.delta),
            options,
            format: args.format.or(file.format).unwrap_or_default(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            trials: args.trials.or(file.trials),
            epsilons: args.epsilons.clone().or(file.epsilons),
        })
    }

    pub fn require<T: Copy>(value: Option<T>, flag: &str) -> Result<T, CliError> {
        value.ok_or_else(|| CliError::Usage(format!("missing required value --{flag}")))
    }
}
