//! Dictionary learning: alternation between a sparse-coding half-step and a
//! block-coordinate dictionary update, plus the group-size-driven
//! regularization schedule and data-driven dictionary initialization.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::GroupPartition;
use crate::data::{CodeMatrix, Dictionary};
use crate::error::{Error, Result};
use crate::solvers::{
    code_groups_dense, code_samples_dense, row21_norm, MmvSolver, SolverConfig,
};

/// Per-group regularization weight `gamma_G = sigma^2 * sqrt(|G|) * (1/|G| + 1)`,
/// derived from the group-size parameterization `q_G = |G|`,
/// `lambda_G = sqrt(|G|)`.
pub fn compute_gamma(sigma2: f64, group_size: usize) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    if group_size == 0 {
        return Err(Error::InvalidArgument("group_size must be >= 1".into()));
    }
    let n = group_size as f64;
    Ok(sigma2 * n.sqrt() * (1.0 / n + 1.0))
}

/// Maps each group size to its regularization weight from a single noise
/// variance, keeping the modeled complexity similar across group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegSchedule {
    sigma2: f64,
}

impl RegSchedule {
    pub fn new(sigma2: f64) -> Result<Self> {
        compute_gamma(sigma2, 1)?;
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn gamma(&self, group_size: usize) -> f64 {
        debug_assert!(group_size >= 1);
        let n = group_size as f64;
        self.sigma2 * n.sqrt() * (1.0 / n + 1.0)
    }
}

/// How the sparse-coding half-step is regularized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodingModel {
    /// Independent per-sample Lasso with a flat weight; `nonneg` clamps
    /// coefficients at zero.
    Lasso { gamma: f64, nonneg: bool },
    /// Joint-sparse coding of contextual groups under the group schedule.
    JointSparse {
        schedule: RegSchedule,
        solver: MmvSolver,
    },
}

/// Outer-loop controls for [`learn`].
#[derive(Debug, Clone, Copy)]
pub struct LearnConfig {
    pub outer_iters: usize,
    pub outer_rel_tol: f64,
    pub inner: SolverConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            outer_iters: 40,
            outer_rel_tol: 1e-5,
            inner: SolverConfig::default(),
        }
    }
}

/// Per-iteration progress of the outer loop. `coding_objective` is the full
/// objective right after the sparse-coding half-step; `objective` and `fit`
/// are evaluated after the dictionary update with the same codes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub coding_objective: f64,
    pub objective: f64,
    pub fit: f64,
    pub atoms_replaced: usize,
    pub seconds: f64,
}

/// Progress report for a [`learn`] run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnReport {
    pub iterations: Vec<IterationStats>,
    /// Full objective after the final coding pass that refreshes the codes
    /// against the returned dictionary.
    pub final_objective: f64,
}

impl LearnReport {
    /// Objectives in evaluation order: coding then update per iteration,
    /// ending with the final refresh. Non-increasing up to solver slack.
    pub fn objective_sequence(&self) -> Vec<f64> {
        let mut seq = Vec::with_capacity(2 * self.iterations.len() + 1);
        for it in &self.iterations {
            seq.push(it.coding_objective);
            seq.push(it.objective);
        }
        seq.push(self.final_objective);
        seq
    }
}

/// Result of a [`learn`] run.
#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub dictionary: Dictionary,
    pub codes: CodeMatrix,
    pub report: LearnReport,
}

/// Draw `k` distinct training samples (seeded, zero vectors skipped) and
/// scale each to unit l2 norm.
pub fn init_dictionary(samples: &Array2<f64>, k: usize, seed: u64) -> Result<Dictionary> {
    let n = samples.ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("dictionary needs >= 1 atom".into()));
    }
    if k > n {
        return Err(Error::NotEnoughSamples {
            requested: k,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut atoms = Vec::with_capacity(k);
    for &i in &order {
        let col = samples.column(i);
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            atoms.push(col.mapv(|v| v / norm));
            if atoms.len() == k {
                break;
            }
        }
    }
    if atoms.len() < k {
        return Err(Error::AllZeroSamples);
    }
    let mut data = Array2::zeros((samples.nrows(), k));
    for (j, atom) in atoms.iter().enumerate() {
        data.column_mut(j).assign(atom);
    }
    Dictionary::new(data)
}

/// One BCD sweep over the atoms: `d_j = R_j Y^j / ||Y^j||^2` projected onto
/// the unit l2 ball when its norm exceeds 1. Atoms whose code row is all
/// zero are replaced by the normalized training sample with the largest
/// current residual norm (distinct samples across replacements within one
/// sweep). Returns the number of replacements.
pub(crate) fn update_atoms_inplace(
    dict: &mut Array2<f64>,
    x: &Array2<f64>,
    codes: &Array2<f64>,
) -> Result<usize> {
    let (bands, k) = dict.dim();
    let n = x.ncols();
    if x.nrows() != bands || codes.dim() != (k, n) {
        return Err(Error::DimensionMismatch(format!(
            "dictionary {}x{}, signals {}x{}, codes {}x{}",
            bands,
            k,
            x.nrows(),
            n,
            codes.nrows(),
            codes.ncols()
        )));
    }
    let mut residual = x - &dict.dot(codes);
    let mut replaced = 0usize;
    let mut used_replacements: BTreeSet<usize> = BTreeSet::new();
    for j in 0..k {
        let row = codes.row(j);
        let row_norm2 = row.dot(&row);
        if row_norm2 == 0.0 {
            // unused atom: replace with the normalized sample whose residual
            // column is largest, skipping samples already taken this sweep
            let mut best: Option<(f64, usize)> = None;
            for c in 0..n {
                if used_replacements.contains(&c) {
                    continue;
                }
                let xc = x.column(c);
                if xc.dot(&xc) == 0.0 {
                    continue;
                }
                let rc = residual.column(c);
                let score = rc.dot(&rc);
                let better = match best {
                    None => true,
                    Some((s, _)) => score > s,
                };
                if better {
                    best = Some((score, c));
                }
            }
            if let Some((_, c)) = best {
                let xc = x.column(c);
                let norm = xc.dot(&xc).sqrt();
                let atom = xc.mapv(|v| v / norm);
                dict.column_mut(j).assign(&atom);
                used_replacements.insert(c);
                replaced += 1;
            } else {
                // no candidate sample left: keep the atom but enforce the
                // unit-ball constraint on it
                let col = dict.column(j);
                let norm = col.dot(&col).sqrt();
                if norm > 1.0 {
                    dict.column_mut(j).mapv_inplace(|v| v / norm);
                }
            }
            continue;
        }
        // numerator R_j Y^j computed without materializing R_j:
        // R_j = R + d_j (Y^j)', so R_j Y^j = R Y^j + ||Y^j||^2 d_j
        let mut numerator: Array1<f64> = Array1::zeros(bands);
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 {
                numerator.scaled_add(v, &residual.column(c));
            }
        }
        numerator.scaled_add(row_norm2, &dict.column(j));
        let mut new_atom = numerator.mapv(|v| v / row_norm2);
        let norm = new_atom.dot(&new_atom).sqrt();
        if norm > 1.0 {
            new_atom.mapv_inplace(|v| v / norm);
        }
        // residual picks up -(d_new - d_old) Y^j on the active columns
        let delta = &new_atom - &dict.column(j);
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 {
                residual.column_mut(c).scaled_add(-v, &delta);
            }
        }
        dict.column_mut(j).assign(&new_atom);
    }
    Ok(replaced)
}

/// Functional form of the dictionary update half-step.
pub fn update_dictionary(
    dict: &Dictionary,
    x: &Array2<f64>,
    codes: &Array2<f64>,
) -> Result<Dictionary> {
    let mut d = dict.array().clone();
    update_atoms_inplace(&mut d, x, codes)?;
    Dictionary::new(d)
}

fn fit_term(dict: &Array2<f64>, x: &Array2<f64>, codes: &Array2<f64>) -> f64 {
    let residual = x - &dict.dot(codes);
    0.5 * residual.iter().map(|v| v * v).sum::<f64>()
}

fn regularizer(codes: &Array2<f64>, model: &CodingModel, partition: Option<&GroupPartition>) -> f64 {
    match model {
        CodingModel::Lasso { gamma, .. } => {
            gamma * codes.iter().map(|v| v.abs()).sum::<f64>()
        }
        CodingModel::JointSparse { schedule, .. } => {
            let partition = partition.expect("joint-sparse regularizer needs a partition");
            partition
                .groups()
                .iter()
                .map(|group| {
                    let block = codes.select(Axis(1), group);
                    schedule.gamma(group.len()) * row21_norm(&block)
                })
                .sum()
        }
    }
}

fn coding_pass(
    dict: &Array2<f64>,
    x: &Array2<f64>,
    model: &CodingModel,
    partition: Option<&GroupPartition>,
    inner: &SolverConfig,
    warm: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    match model {
        CodingModel::Lasso { gamma, nonneg } => {
            code_samples_dense(dict, x, *gamma, *nonneg, inner, warm)
        }
        CodingModel::JointSparse { schedule, solver } => {
            let partition = partition.ok_or_else(|| {
                Error::InvalidArgument("joint-sparse coding requires a partition".into())
            })?;
            code_groups_dense(dict, x, partition, schedule, inner, *solver, warm)
        }
    }
}

/// Alternate sparse coding and dictionary updates from the given initial
/// dictionary. Stops after `outer_iters` iterations or when the relative
/// objective change drops below `outer_rel_tol`, then refreshes the codes
/// against the final dictionary. Coding half-steps warm-start from the
/// previous codes, so the full objective is non-increasing across half-steps
/// up to solver tolerance slack.
pub fn learn(
    x: &Array2<f64>,
    init: &Dictionary,
    model: &CodingModel,
    partition: Option<&GroupPartition>,
    config: &LearnConfig,
) -> Result<LearnOutput> {
    if config.outer_iters < 1 {
        return Err(Error::InvalidArgument("outer_iters must be >= 1".into()));
    }
    if init.bands() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bands, signals have {}",
            init.bands(),
            x.nrows()
        )));
    }
    if let CodingModel::JointSparse { .. } = model {
        match partition {
            Some(p) if p.num_pixels() == x.ncols() => {}
            Some(p) => {
                return Err(Error::DimensionMismatch(format!(
                    "partition covers {} pixels, signals have {} columns",
                    p.num_pixels(),
                    x.ncols()
                )))
            }
            None => {
                return Err(Error::InvalidArgument(
                    "joint-sparse learning requires a partition".into(),
                ))
            }
        }
    } else if partition.is_some() {
        return Err(Error::InvalidArgument(
            "partition is only meaningful for joint-sparse learning".into(),
        ));
    }
    let mut dict = init.array().clone();
    let mut codes: Option<Array2<f64>> = None;
    let mut iterations = Vec::with_capacity(config.outer_iters);
    let mut prev_objective: Option<f64> = None;
    for iteration in 0..config.outer_iters {
        let started = Instant::now();
        let y = coding_pass(&dict, x, model, partition, &config.inner, codes.as_ref())?;
        let coding_objective = fit_term(&dict, x, &y) + regularizer(&y, model, partition);
        let atoms_replaced = update_atoms_inplace(&mut dict, x, &y)?;
        let fit = fit_term(&dict, x, &y);
        let objective = fit + regularizer(&y, model, partition);
        codes = Some(y);
        iterations.push(IterationStats {
            iteration,
            coding_objective,
            objective,
            fit,
            atoms_replaced,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(prev) = prev_objective {
            if (prev - objective).abs() / prev.abs().max(1e-12) < config.outer_rel_tol {
                break;
            }
        }
        prev_objective = Some(objective);
    }
    // refresh the codes against the final dictionary
    let y = coding_pass(&dict, x, model, partition, &config.inner, codes.as_ref())?;
    let final_objective = fit_term(&dict, x, &y) + regularizer(&y, model, partition);
    Ok(LearnOutput {
        dictionary: Dictionary::new(dict)?,
        codes: CodeMatrix::from_dense(&y),
        report: LearnReport {
            iterations,
            final_objective,
        },
    })
}
