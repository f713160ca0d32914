mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slam_core::{Error, SystemKind};

#[derive(Parser)]
#[command(name = "slam", version, about = "Multiscale blind source separation of step-function mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate null quantiles of the multiscale statistic and cache them.
    Quantiles(QuantilesArgs),
    /// Estimate weights, region and sources from one data file.
    Estimate(EstimateArgs),
    /// Run a simulation study on a preset or scenario file.
    Study(StudyArgs),
    /// Write synthetic data for a preset or scenario file.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SystemArg {
    Full,
    Dyadic,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Full => SystemKind::Full,
            SystemArg::Dyadic => SystemKind::Dyadic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectorArg {
    Fixed,
    Mvt,
    Sst,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LossArg {
    L1,
    L2,
}

#[derive(Args)]
pub struct CacheArgs {
    /// Quantile cache directory.
    #[arg(long, env = "SLAM_QUANTILE_CACHE")]
    pub cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct QuantilesArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "dyadic")]
    pub system: SystemArg,
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,
    /// Monte-Carlo replications; defaults by n.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Error law: gaussian, t:DF or chi2:DF.
    #[arg(long, default_value = "gaussian")]
    pub noise: String,
    #[command(flatten)]
    pub cache: CacheArgs,
}

/// Threshold and selector flags shared by estimation and studies.
#[derive(Args)]
pub struct ThresholdArgs {
    /// Level of the weight region.
    #[arg(long, conflicts_with = "q")]
    pub alpha: Option<f64>,
    /// Fixed threshold of the weight region; needs the fixed selector.
    #[arg(long)]
    pub q: Option<f64>,
    /// Level of the signal constraint.
    #[arg(long, conflicts_with = "q_beta")]
    pub beta: Option<f64>,
    /// Fixed threshold of the signal constraint.
    #[arg(long)]
    pub q_beta: Option<f64>,
    #[arg(long, value_enum)]
    pub selector: Option<SelectorArg>,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    /// Loss of the split-sample selector.
    #[arg(long, value_enum, default_value = "l2")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "dyadic")]
    pub system: SystemArg,
    /// Replications of the null quantile simulation; defaults by n.
    #[arg(long)]
    pub quantile_reps: Option<usize>,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Single-column CSV of observations, optional header "y".
    #[arg(long)]
    pub input: PathBuf,
    /// Alphabet values, e.g. "0,1,2".
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub alphabet: Vec<f64>,
    #[arg(long)]
    pub m: usize,
    #[arg(long, conflicts_with = "estimate_sigma", required_unless_present = "estimate_sigma")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub estimate_sigma: bool,
    /// Minimal distance between jumps as a fraction of n.
    #[arg(long)]
    pub lambda: f64,
    /// Minimal witness length as a fraction of n; defaults to lambda.
    #[arg(long)]
    pub lambda_star: Option<f64>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub cache: CacheArgs,
    /// Output directory for result.json, segments.csv and sources.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScenarioArgs {
    /// Preset name or path to a preset JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Error law: gaussian, t:DF, chi2:DF or none.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub reps: usize,
    /// Overrides the preset's jump distance prior.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    /// Output directory for report.json and replicates.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output CSV of observations.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true weights and sources as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Process exit codes.
pub mod exit {
    pub const VALIDATION: u8 = 2;
    pub const IO: u8 = 3;
    pub const INFEASIBLE: u8 = 4;
    pub const EMPTY_REGION: u8 = 5;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => exit::IO,
        Error::Infeasible => exit::INFEASIBLE,
        Error::EmptyRegion | Error::AllEmpty | Error::EmptyCandidates => exit::EMPTY_REGION,
        _ => exit::VALIDATION,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantiles(a) => commands::quantiles(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Study(a) => commands::study(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
