//! `tta`: augment images, learn aggregation weights, evaluate aggregators
//! and generate synthetic experiments.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid arguments,
//! 3 I/O failure, 4 dimension mismatch, 5 malformed input file.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tta_core::TtaError;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIMENSION: u8 = 4;
pub const EXIT_FORMAT: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "tta", version, about = "Test-time augmentation toolkit")]
struct Cli {
    /// key=value file with flag defaults; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write every policy view of every PNG in a directory.
    Augment(AugmentArgs),
    /// Fit ClassTTA / AugTTA weights on stored predictions.
    Learn(LearnArgs),
    /// Score an aggregation method and write a JSON report.
    Eval(EvalArgs),
    /// Generate a synthetic scenario with its expected properties.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// `standard`, `expanded`, `flips` or a policy manifest file.
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Crop side for the standard policy.
    #[arg(long, default_value_t = tta_core::augment::STANDARD_CROP_SIZE)]
    pub crop_size: u32,
    /// Resize inputs to N×N before augmenting.
    #[arg(long, value_name = "N")]
    pub resize: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Class,
    Aug,
    Auto,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub val_preds: PathBuf,
    #[arg(long)]
    pub val_labels: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Raw,
    Mean,
    Gps,
    Learned,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Weights file, required for `learned`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub gps_size: usize,
    /// Predictions GPS selects on; defaults to the evaluated set.
    #[arg(long, requires = "gps_labels")]
    pub gps_preds: Option<PathBuf>,
    #[arg(long, requires = "gps_preds")]
    pub gps_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub subsamples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub subsample_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Invariant,
    Planted,
    Datasize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Training-set size; validation gets n/5 and test n.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(TtaError),
}

impl From<TtaError> for Failure {
    fn from(e: TtaError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(TtaError::Io(e))
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Core(e) => match e {
                TtaError::Io(_) => EXIT_IO,
                TtaError::DimensionMismatch(_)
                | TtaError::LengthMismatch { .. }
                | TtaError::InvalidCropSize { .. }
                | TtaError::GeometryError(_) => EXIT_DIMENSION,
                e if e.is_format_error() => EXIT_FORMAT,
                TtaError::InvalidConfig(_)
                | TtaError::UnknownTransform(_)
                | TtaError::BadTransformParam { .. }
                | TtaError::DegenerateSplit(_)
                | TtaError::NonMonotoneIncrements => EXIT_USAGE,
                _ => EXIT_FAILURE,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Core(TtaError::Io(std::io::Error::other(e))))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Thread pool capped by `TTA_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("TTA_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::Usage(format!("TTA_THREADS must be a positive integer, got {v:?}"))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let args = match config::apply(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code() as u8;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Augment(a) => commands::augment(a, &args),
        Command::Learn(a) => commands::learn(a, &args),
        Command::Eval(a) => commands::eval(a, &args),
        Command::Simulate(a) => commands::simulate(a, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
