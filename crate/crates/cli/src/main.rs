//! `scdl` command-line interface: dictionary learning, classification, the
//! simulated-multispectral experiment, and the parallel-coding benchmark.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{BenchOptions, ClassifyOptions, MsiOptions};
use config::CommonArgs;

/// Errors mapped onto process exit codes.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Data(scdl_core::Error),
    Numerical(String),
}

impl From<scdl_core::Error> for AppError {
    fn from(e: scdl_core::Error) -> Self {
        match e {
            scdl_core::Error::NumericalFailure(msg) => AppError::Numerical(msg),
            other => AppError::Data(other),
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "configuration error: {msg}"),
            AppError::Data(e) => write!(f, "data error: {e}"),
            AppError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numerical(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "scdl",
    about = "Spectral-contextual dictionary learning for hyperspectral image classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dictionary header path (default: <out>/dictionary.json)
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Reuse a saved SVM model instead of training
    #[arg(long)]
    model: Option<PathBuf>,
    /// Repeat with seeds seed..seed+R and report mean +/- std
    #[arg(long, default_value_t = 1)]
    repeats: u32,
}

#[derive(Args)]
struct MsiArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dictionary header path (default: <out>/dictionary.json)
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Number of spectral bins
    #[arg(long, default_value_t = 8)]
    bins: usize,
    /// Reuse the HSI-level C instead of re-running cross validation
    #[arg(long)]
    reuse_c: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fixed outer-iteration budget
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Thread counts to time
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    thread_counts: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a dictionary and code every pixel
    Learn {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Code pixels, train/apply the one-vs-one SVM, and evaluate
    Classify(ClassifyArgs),
    /// Classify simulated multispectral and coarse-HSI measurements
    Msi(MsiArgs),
    /// Time the learning loop at several thread counts
    Bench(BenchArgs),
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Learn { common } => {
            let config = config::resolve(&common)?;
            commands::cmd_learn(&config)
        }
        Command::Classify(args) => {
            let config = config::resolve(&args.common)?;
            commands::cmd_classify(
                &config,
                &ClassifyOptions {
                    dictionary: args.dictionary,
                    model: args.model,
                    repeats: args.repeats,
                },
            )
        }
        Command::Msi(args) => {
            let config = config::resolve(&args.common)?;
            commands::cmd_msi(
                &config,
                &MsiOptions {
                    dictionary: args.dictionary,
                    bins: args.bins,
                    reuse_c: args.reuse_c,
                },
            )
        }
        Command::Bench(args) => {
            let config = config::resolve(&args.common)?;
            if args.iters == 0 {
                return Err(AppError::Config("iters: must be >= 1".into()));
            }
            if args.thread_counts.is_empty() || args.thread_counts.iter().any(|&t| t == 0) {
                return Err(AppError::Config(
                    "thread_counts: must be positive".into(),
                ));
            }
            commands::cmd_bench(
                &config,
                &BenchOptions {
                    iters: args.iters,
                    thread_counts: args.thread_counts,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scdl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
