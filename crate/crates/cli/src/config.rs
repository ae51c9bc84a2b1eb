//! Pipeline configuration: a JSON file merged with command-line overrides,
//! validated into a typed config before any compute starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use scdl_core::context::MomentOrder;
use scdl_core::learn::LearnConfig;
use scdl_core::solvers::{MmvSolver, SolverConfig};

use crate::AppError;

/// Which pipeline variant runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Spectral-only: per-pixel nonnegative Lasso codes.
    Sdl,
    /// Contextual moments: per-pixel Lasso codes over window features.
    Cdl,
    /// Spectral-contextual: joint-sparse codes over patch groups.
    Scdl,
}

impl Mode {
    fn parse(s: &str) -> Result<Self, AppError> {
        match s.to_ascii_lowercase().as_str() {
            "sdl" => Ok(Mode::Sdl),
            "cdl" => Ok(Mode::Cdl),
            "scdl" => Ok(Mode::Scdl),
            other => Err(AppError::Config(format!(
                "mode: {other:?} is not one of sdl|cdl|scdl"
            ))),
        }
    }
}

/// Raw JSON shape; every field optional so flags can fill the gaps.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub cube: Option<String>,
    pub labels: Option<String>,
    pub mode: Option<String>,
    pub train_fraction: Option<f64>,
    pub train_labels: Option<String>,
    pub test_labels: Option<String>,
    pub patch: Option<usize>,
    pub window: Option<usize>,
    pub moments: Option<String>,
    pub atoms: Option<usize>,
    pub atoms_fraction: Option<f64>,
    pub sigma2: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
    pub c_grid: Option<Vec<f64>>,
    pub solver: Option<String>,
    pub nonneg: Option<bool>,
    pub outer_iters: Option<usize>,
    pub outer_rel_tol: Option<f64>,
    pub inner_max_iters: Option<usize>,
    pub inner_rel_tol: Option<f64>,
    pub prune_tol: Option<f64>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AppError::Config(format!("config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Flag overrides shared by every subcommand.
#[derive(Debug, Clone, clap::Args, Default)]
pub struct CommonArgs {
    /// JSON config file; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cube header path
    #[arg(long)]
    pub cube: Option<String>,
    /// Label CSV path
    #[arg(long)]
    pub labels: Option<String>,
    /// Pipeline mode: sdl | cdl | scdl
    #[arg(long)]
    pub mode: Option<String>,
    /// Patch side for contextual groups (scdl)
    #[arg(long)]
    pub patch: Option<usize>,
    /// Window side for contextual moments (cdl, odd)
    #[arg(long)]
    pub window: Option<usize>,
    /// Dictionary size as a fraction of the training set
    #[arg(long = "atoms-frac")]
    pub atoms_frac: Option<f64>,
    /// Dictionary size as an absolute atom count
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Noise variance driving the per-group regularization (scdl)
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Flat Lasso weight (sdl, cdl)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Training fraction for the stratified split
    #[arg(long = "train-fraction")]
    pub train_fraction: Option<f64>,
    /// Joint-sparse solver: mfocuss | bcd
    #[arg(long)]
    pub solver: Option<String>,
    /// Worker thread count
    #[arg(long)]
    pub threads: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
}

/// Fully validated pipeline settings.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub cube: PathBuf,
    pub labels: PathBuf,
    pub mode: Mode,
    pub split: SplitSpec,
    pub patch: usize,
    pub window: usize,
    pub moments: MomentOrder,
    pub atoms: AtomCount,
    pub sigma2: f64,
    pub gamma: f64,
    pub gamma_grid: Option<Vec<f64>>,
    pub c_grid: Vec<f64>,
    pub solver: MmvSolver,
    pub nonneg: bool,
    pub learn: LearnConfig,
    pub threads: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub enum SplitSpec {
    Fraction(f64),
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, Copy)]
pub enum AtomCount {
    Count(usize),
    Fraction(f64),
}

impl AtomCount {
    pub fn resolve(&self, train_count: usize) -> usize {
        match *self {
            AtomCount::Count(k) => k,
            AtomCount::Fraction(f) => ((train_count as f64 * f).ceil() as usize).max(1),
        }
    }
}

fn merge<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

/// Merge the config file with flag overrides and validate every field.
/// Error messages name the offending field.
pub fn resolve(args: &CommonArgs) -> Result<PipelineConfig, AppError> {
    let raw = match &args.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let cube = merge(&args.cube, &raw.cube)
        .ok_or_else(|| AppError::Config("missing required field: cube".into()))?;
    let labels = merge(&args.labels, &raw.labels)
        .ok_or_else(|| AppError::Config("missing required field: labels".into()))?;
    let mode = Mode::parse(
        &merge(&args.mode, &raw.mode)
            .ok_or_else(|| AppError::Config("missing required field: mode".into()))?,
    )?;
    let split = match (&raw.train_labels, &raw.test_labels) {
        (Some(train), Some(test)) => SplitSpec::Files {
            train: PathBuf::from(train),
            test: PathBuf::from(test),
        },
        (None, None) => {
            let fraction = merge(&args.train_fraction, &raw.train_fraction).unwrap_or(0.1);
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(AppError::Config(format!(
                    "train_fraction: {fraction} not in (0, 1)"
                )));
            }
            SplitSpec::Fraction(fraction)
        }
        _ => {
            return Err(AppError::Config(
                "train_labels/test_labels: provide both or neither".into(),
            ))
        }
    };
    let patch = merge(&args.patch, &raw.patch).unwrap_or(8);
    if mode == Mode::Scdl && patch == 0 {
        return Err(AppError::Config("patch: must be >= 1 for scdl".into()));
    }
    let window = merge(&args.window, &raw.window).unwrap_or(5);
    if mode == Mode::Cdl && window % 2 == 0 {
        return Err(AppError::Config(format!(
            "window: {window} must be odd for cdl"
        )));
    }
    let moments = match raw.moments.as_deref().unwrap_or("mean") {
        "mean" => MomentOrder::MeanOnly,
        "mean_std" => MomentOrder::MeanAndStd,
        other => {
            return Err(AppError::Config(format!(
                "moments: {other:?} is not one of mean|mean_std"
            )))
        }
    };
    let atoms = match (merge(&args.atoms, &raw.atoms), merge(&args.atoms_frac, &raw.atoms_fraction)) {
        (Some(k), None) => {
            if k == 0 {
                return Err(AppError::Config("atoms: must be >= 1".into()));
            }
            AtomCount::Count(k)
        }
        (None, Some(f)) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(AppError::Config(format!(
                    "atoms_fraction: {f} not in (0, 1]"
                )));
            }
            AtomCount::Fraction(f)
        }
        (None, None) => AtomCount::Fraction(0.5),
        (Some(_), Some(_)) => {
            return Err(AppError::Config(
                "atoms/atoms_fraction: provide at most one".into(),
            ))
        }
    };
    let sigma2 = merge(&args.sigma2, &raw.sigma2).unwrap_or(10.0);
    if mode == Mode::Scdl && !(sigma2 > 0.0) {
        return Err(AppError::Config(format!("sigma2: {sigma2} must be > 0")));
    }
    let gamma = merge(&args.gamma, &raw.gamma).unwrap_or(1.0);
    if mode != Mode::Scdl && !(gamma > 0.0) {
        return Err(AppError::Config(format!("gamma: {gamma} must be > 0")));
    }
    if let Some(grid) = &raw.gamma_grid {
        if grid.is_empty() || grid.iter().any(|&g| !(g > 0.0)) {
            return Err(AppError::Config(
                "gamma_grid: entries must be positive".into(),
            ));
        }
    }
    let c_grid = raw
        .c_grid
        .clone()
        .unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]);
    if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0)) {
        return Err(AppError::Config("c_grid: entries must be positive".into()));
    }
    let solver = match merge(&args.solver, &raw.solver).as_deref().unwrap_or("mfocuss") {
        "mfocuss" => MmvSolver::MFocuss,
        "bcd" => MmvSolver::Bcd,
        other => {
            return Err(AppError::Config(format!(
                "solver: {other:?} is not one of mfocuss|bcd"
            )))
        }
    };
    let nonneg = raw.nonneg.unwrap_or(mode == Mode::Sdl);
    let inner = SolverConfig {
        max_iters: raw.inner_max_iters.unwrap_or(200),
        rel_tol: raw.inner_rel_tol.unwrap_or(1e-6),
        prune_tol: raw.prune_tol.unwrap_or(1e-8),
    };
    inner
        .validate()
        .map_err(|e| AppError::Config(format!("solver config: {e}")))?;
    let learn = LearnConfig {
        outer_iters: raw.outer_iters.unwrap_or(40),
        outer_rel_tol: raw.outer_rel_tol.unwrap_or(1e-5),
        inner,
    };
    if learn.outer_iters == 0 {
        return Err(AppError::Config("outer_iters: must be >= 1".into()));
    }
    let threads = merge(&args.threads, &raw.threads).unwrap_or(1);
    if threads == 0 {
        return Err(AppError::Config("threads: must be >= 1".into()));
    }
    let seed = merge(&args.seed, &raw.seed).unwrap_or(0);
    let out = merge(&args.out, &raw.out).unwrap_or_else(|| "scdl-out".into());
    Ok(PipelineConfig {
        cube: PathBuf::from(cube),
        labels: PathBuf::from(labels),
        mode,
        split,
        patch,
        window,
        moments,
        atoms,
        sigma2,
        gamma,
        gamma_grid: raw.gamma_grid,
        c_grid,
        solver,
        nonneg,
        learn,
        threads,
        seed,
        out: PathBuf::from(out),
    })
}
