//! Simulated multispectral measurements: band binning and sparse coding at
//! the binned resolution against the effective dictionary `B D`.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::context::GroupPartition;
use crate::data::{CodeMatrix, Dictionary};
use crate::error::{Error, Result};
use crate::learn::RegSchedule;
use crate::solvers::{code_groups, code_samples, MmvSolver, SolverConfig};

/// Linear band-summing operator: each output row sums one half-open band
/// range. Ranges are disjoint and ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandBinner {
    ranges: Vec<(usize, usize)>,
}

impl BandBinner {
    pub fn new(ranges: Vec<(usize, usize)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidArgument("binner needs >= 1 range".into()));
        }
        let mut prev_end = 0usize;
        for (i, &(start, end)) in ranges.iter().enumerate() {
            if start >= end {
                return Err(Error::InvalidArgument(format!(
                    "empty bin range [{start}, {end})"
                )));
            }
            if i > 0 && start < prev_end {
                return Err(Error::InvalidArgument(
                    "bin ranges must be ascending and non-overlapping".into(),
                ));
            }
            prev_end = end;
        }
        Ok(Self { ranges })
    }

    pub fn bins(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::HeaderParse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        let parsed: BandBinner =
            serde_json::from_str(&text).map_err(|e| Error::HeaderParse(e.to_string()))?;
        Self::new(parsed.ranges)
    }
}

/// Which part of the spectrum the equal bins cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinCoverage {
    /// Bins partition the lower half `[0, floor(B/2))` of the bands.
    LowerHalf,
    /// Bins partition all `B` bands.
    Full,
}

/// Equally sized bins over the chosen coverage; the division remainder goes
/// to the last bin.
pub fn make_binner(total_bands: usize, bins: usize, coverage: BinCoverage) -> Result<BandBinner> {
    let covered = match coverage {
        BinCoverage::Full => total_bands,
        BinCoverage::LowerHalf => total_bands / 2,
    };
    if bins == 0 || bins > covered {
        return Err(Error::InvalidBinCount { bins, covered });
    }
    let base = covered / bins;
    let mut ranges = Vec::with_capacity(bins);
    for i in 0..bins {
        let start = i * base;
        let end = if i + 1 == bins { covered } else { start + base };
        ranges.push((start, end));
    }
    BandBinner::new(ranges)
}

/// Apply the binner to a `bands x n` matrix: output row `i` is the sum of
/// the input rows in range `i`.
pub fn apply_binner(binner: &BandBinner, spectra: &Array2<f64>) -> Result<Array2<f64>> {
    let bands = spectra.nrows();
    for &(start, end) in binner.ranges() {
        if end > bands {
            return Err(Error::RangeOutOfBounds { start, end, bands });
        }
    }
    let mut out = Array2::zeros((binner.bins(), spectra.ncols()));
    for (i, &(start, end)) in binner.ranges().iter().enumerate() {
        let slab = spectra.slice(ndarray::s![start..end, ..]);
        out.row_mut(i).assign(&slab.sum_axis(Axis(0)));
    }
    Ok(out)
}

/// Regularization applied when coding at the binned resolution.
#[derive(Debug, Clone)]
pub enum MsiCoding<'a> {
    /// Independent per-sample Lasso (nonnegative for the spectral-only
    /// pipeline).
    Lasso { gamma: f64, nonneg: bool },
    /// Joint-sparse coding of contextual groups.
    JointSparse {
        partition: &'a GroupPartition,
        schedule: RegSchedule,
        solver: MmvSolver,
    },
}

/// Sparse-code binned measurements `z` against the binned dictionary
/// `B D`. The effective dictionary is a derived operator: its columns are
/// not re-projected onto the unit ball.
pub fn code_msi(
    dict: &Dictionary,
    binner: &BandBinner,
    z: &Array2<f64>,
    coding: &MsiCoding,
    config: &SolverConfig,
) -> Result<CodeMatrix> {
    let d_eff = apply_binner(binner, dict.array())?;
    if z.nrows() != binner.bins() {
        return Err(Error::DimensionMismatch(format!(
            "binned samples have {} rows, binner produces {}",
            z.nrows(),
            binner.bins()
        )));
    }
    match coding {
        MsiCoding::Lasso { gamma, nonneg } => {
            code_samples(&d_eff, z, *gamma, *nonneg, config)
        }
        MsiCoding::JointSparse {
            partition,
            schedule,
            solver,
        } => code_groups(&d_eff, z, partition, schedule, config, *solver),
    }
}
