//! `auxmtl`: generate scene datasets, split them, train task-set
//! experiments and report their results.
//!
//! Exit status is 0 on success, 1 on runtime or data errors and 2 on usage
//! errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use auxmtl_core::TaskSet;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<auxmtl_core::Error>() {
            Some(auxmtl_core::Error::InvalidConfig(msg)) => CliError::Usage(msg.clone()),
            _ => CliError::Runtime(e),
        }
    }
}

impl From<auxmtl_core::Error> for CliError {
    fn from(e: auxmtl_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

#[derive(Parser, Debug)]
#[command(name = "auxmtl", version, about = "Multi-task training with auxiliary tasks on synthetic road scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset and its manifest.
    Generate(GenerateArgs),
    /// Split a dataset into spatially separated train/test/buffer id lists.
    Split(SplitArgs),
    /// Train one task-set experiment.
    Train(TrainArgs),
    /// Train all task-set experiments and write the results table.
    Matrix(MatrixArgs),
    /// Turn history CSVs into convergence-curve files and a results table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// Defaults to $AUXMTL_SEED, else 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON label distribution; missing fields take their defaults.
    #[arg(long)]
    pub dist: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Bin side length in meters.
    #[arg(long, default_value_t = 65.0)]
    pub bin: f64,
    #[arg(long, default_value_t = 100)]
    pub test_bins: usize,
    /// Buffer width in meters.
    #[arg(long, default_value_t = 65.0)]
    pub buffer: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output split file; defaults to `<data>/split.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Single,
    Fixed,
    Learned,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RegArg {
    Log,
    Pos,
}

/// Flags shared by `train` and `matrix`. Each one overrides the matching
/// value from `--config`.
#[derive(Args, Debug)]
pub struct RunArgs {
    /// Training dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Separate test dataset directory.
    #[arg(long, conflicts_with = "split")]
    pub test_data: Option<PathBuf>,
    /// Split file over --data, written by `split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub reg: Option<RegArg>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate of the loss weighting coefficients.
    #[arg(long)]
    pub c_lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Resolved config from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Comma-separated task ids: 1 seg, 2 depth, 3 time, 4 weather.
    #[arg(long)]
    pub tasks: Option<TaskSet>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    /// Experiments run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// A history CSV, a run directory, or a matrix directory.
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Matrix(a) => commands::matrix(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `auxmtl --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
