mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad arguments or input; exits with status 2 like library validation errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "pchazard",
    version,
    about = "Fit step-function hazards to event-time data"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug). `RUST_LOG` takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one hazard from a survival CSV.
    Fit(FitArgs),
    /// Fit the three hazards of an illness-death model from long-format data.
    Multistate(MultistateArgs),
    /// Run simulation studies over scenarios and sample sizes.
    Simulate(SimulateArgs),
    /// Time the solver, the path and the bootstrap on synthetic data.
    Bench(BenchArgs),
    /// Survival curves of a saved illness-death model.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Bootstrap quantile level.
    #[arg(long)]
    pub q: Option<f64>,
    /// Change points allowed in the pilot fit.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "L")]
    pub l_boot: Option<usize>,
    #[arg(long, env = "PCHAZARD_SEED")]
    pub seed: Option<u64>,
    /// Explicit window `tmin,tmax`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub p_low: Option<f64>,
    #[arg(long, visible_alias = "p")]
    pub p_high: Option<f64>,
    /// Grid size m (default: number of subjects).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tune: TuneArgs,
    /// Use these coefficients instead of a Cox fit.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    /// Left-truncation column (default: `entry` if present).
    #[arg(long)]
    pub entry_col: Option<String>,
    /// Covariate columns (default: all remaining columns).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub covariates: Option<Vec<String>>,
    /// Drop covariates and fit the Nelson-Aalen increments.
    #[arg(long, conflicts_with = "beta")]
    pub ignore_covariates: bool,
}

#[derive(Debug, Args)]
pub struct MultistateArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tune: TuneArgs,
    /// Value of the `to` column that marks censoring.
    #[arg(long, default_value = pchazard::event_data::DEFAULT_CENSOR_TOKEN)]
    pub censor_token: String,
    /// Times at which survival curves are written (default: 201 points up
    /// to the last observed time).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario names among A1, B1, A2, B2.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub scenario: Option<Vec<String>>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n: Option<Vec<usize>>,
    /// Replications per cell (default 200).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, env = "PCHAZARD_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Problem sizes.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1000,10000,100000")]
    pub m: Vec<usize>,
    /// Timed repetitions per size; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Bootstrap replicates in the timed bootstrap.
    #[arg(long = "L", default_value_t = 100)]
    pub l_boot: usize,
    #[arg(long, env = "PCHAZARD_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// `model.json` written by `multistate`.
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub times: Option<Vec<f64>>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<pchazard::Error>() {
            return if e.is_user_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
