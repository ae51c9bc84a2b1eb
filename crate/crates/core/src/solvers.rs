//! Sparse coding solvers: single-vector Lasso by cyclic coordinate descent,
//! and the grouped l2/l1 joint-sparse problem by regularized M-FOCUSS or by
//! row-wise block coordinate descent.
//!
//! All solvers are pure functions of their inputs and are safe to call
//! concurrently. [`code_groups`] parallelizes over contextual groups; each
//! group writes a disjoint set of output columns, so the result does not
//! depend on thread count.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::context::GroupPartition;
use crate::data::CodeMatrix;
use crate::error::{Error, Result};
use crate::learn::RegSchedule;

/// Iteration and pruning controls shared by the sparse solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Cap on coordinate-descent sweeps / M-FOCUSS updates.
    pub max_iters: usize,
    /// Relative change threshold for termination.
    pub rel_tol: f64,
    /// Rows with l2 norm below `prune_tol * max_row_norm` are zeroed on exit.
    pub prune_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-6,
            prune_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.prune_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Single-signal Lasso instance `min_y 1/2 ||x - D y||^2 + gamma ||y||_1`,
/// optionally with `y >= 0`.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    pub dictionary: ArrayView2<'a, f64>,
    pub signal: ndarray::ArrayView1<'a, f64>,
    pub gamma: f64,
    pub nonneg: bool,
}

/// Joint-sparse instance over one contextual group:
/// `min_Y 1/2 ||X_G - D Y||_F^2 + gamma_G ||Y||_{2,1}`.
#[derive(Debug, Clone)]
pub struct MmvProblem<'a> {
    pub dictionary: ArrayView2<'a, f64>,
    pub signals: ArrayView2<'a, f64>,
    pub gamma: f64,
}

/// Which joint-sparse solver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmvSolver {
    MFocuss,
    Bcd,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lasso coordinate descent
// ---------------------------------------------------------------------------

/// Max violation of the Lasso subgradient conditions, measured from the
/// residual correlations `corr - q` where `q = gram * y`.
fn lasso_kkt_violation(
    corr: &Array1<f64>,
    q: &Array1<f64>,
    y: &Array1<f64>,
    gamma: f64,
    nonneg: bool,
) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..y.len() {
        let g = corr[j] - q[j]; // d_j' (x - D y)
        let v = if nonneg {
            if y[j] > 0.0 {
                (g - gamma).abs()
            } else {
                g - gamma
            }
        } else if y[j] != 0.0 {
            (g - gamma * y[j].signum()).abs()
        } else {
            g.abs() - gamma
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent with covariance updates. `gram = D'D` and
/// `corr = D'x` are precomputed by the caller so bulk coding can share the
/// Gram matrix; `y` is the warm start and holds the solution on return.
fn lasso_core(
    gram: &Array2<f64>,
    corr: &Array1<f64>,
    gamma: f64,
    nonneg: bool,
    config: &SolverConfig,
    y: &mut Array1<f64>,
) {
    let k = corr.len();
    let mut q = gram.dot(y);
    let tol = config.rel_tol * gamma;
    for _ in 0..config.max_iters {
        for j in 0..k {
            let gjj = gram[(j, j)];
            let yj = y[j];
            if gjj <= 0.0 {
                // zero atom: coefficient fixed at zero
                y[j] = 0.0;
                continue;
            }
            let rho = corr[j] - q[j] + gjj * yj;
            let y_new = if nonneg {
                ((rho - gamma) / gjj).max(0.0)
            } else {
                let mag = rho.abs() - gamma;
                if mag <= 0.0 {
                    0.0
                } else {
                    mag * rho.signum() / gjj
                }
            };
            if y_new != yj {
                q.scaled_add(y_new - yj, &gram.column(j));
                y[j] = y_new;
            }
        }
        if lasso_kkt_violation(corr, &q, y, gamma, nonneg) <= tol {
            // confirm on a freshly computed q so covariance-update drift
            // cannot fake convergence
            q = gram.dot(y);
            if lasso_kkt_violation(corr, &q, y, gamma, nonneg) <= tol {
                break;
            }
        }
    }
}

/// Solve one Lasso instance. Returns the coefficients and the objective
/// `1/2 ||x - D y||^2 + gamma ||y||_1` evaluated at the returned point.
pub fn lasso_cd(problem: &LassoProblem, config: &SolverConfig) -> Result<(Array1<f64>, f64)> {
    config.validate()?;
    check_gamma(problem.gamma)?;
    let d = &problem.dictionary;
    let x = &problem.signal;
    if d.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bands, signal has {}",
            d.nrows(),
            x.len()
        )));
    }
    let gram = d.t().dot(d);
    let corr = d.t().dot(x);
    let mut y = Array1::zeros(d.ncols());
    lasso_core(&gram, &corr, problem.gamma, problem.nonneg, config, &mut y);
    let residual = x.to_owned() - d.dot(&y);
    let objective =
        0.5 * residual.dot(&residual) + problem.gamma * y.iter().map(|v| v.abs()).sum::<f64>();
    Ok((y, objective))
}

/// Lasso-code every column of `x` against `dict`, in parallel. Sharing the
/// Gram matrix across samples; deterministic regardless of thread count.
pub(crate) fn code_samples_dense(
    dict: &Array2<f64>,
    x: &Array2<f64>,
    gamma: f64,
    nonneg: bool,
    config: &SolverConfig,
    warm: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    config.validate()?;
    check_gamma(gamma)?;
    if dict.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bands, signals have {}",
            dict.nrows(),
            x.nrows()
        )));
    }
    let k = dict.ncols();
    let n = x.ncols();
    if let Some(w) = warm {
        if w.dim() != (k, n) {
            return Err(Error::DimensionMismatch("warm start shape".into()));
        }
    }
    let gram = dict.t().dot(dict);
    let corr_all = dict.t().dot(x);
    let columns: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let corr = corr_all.column(i).to_owned();
            let mut y = match warm {
                Some(w) => w.column(i).to_owned(),
                None => Array1::zeros(k),
            };
            lasso_core(&gram, &corr, gamma, nonneg, config, &mut y);
            y
        })
        .collect();
    let mut out = Array2::zeros((k, n));
    for (i, col) in columns.into_iter().enumerate() {
        out.column_mut(i).assign(&col);
    }
    Ok(out)
}

/// Lasso-code every column of `x`, returning sparse triplets.
pub fn code_samples(
    dict: &Array2<f64>,
    x: &Array2<f64>,
    gamma: f64,
    nonneg: bool,
    config: &SolverConfig,
) -> Result<CodeMatrix> {
    let dense = code_samples_dense(dict, x, gamma, nonneg, config, None)?;
    Ok(CodeMatrix::from_dense(&dense))
}

// ---------------------------------------------------------------------------
// Shared pieces for the MMV solvers
// ---------------------------------------------------------------------------

fn frob_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn row_norms(y: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(y.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()))
}

/// Sum of row l2 norms (the l2/l1 norm).
pub fn row21_norm(y: &Array2<f64>) -> f64 {
    y.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).sum()
}

/// `1/2 ||X - D Y||_F^2 + gamma ||Y||_{2,1}`.
pub fn mmv_objective(
    dict: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    y: &Array2<f64>,
    gamma: f64,
) -> f64 {
    let residual = x.to_owned() - dict.dot(y);
    0.5 * residual.iter().map(|v| v * v).sum::<f64>() + gamma * row21_norm(y)
}

/// Zero out rows whose norm falls below `prune_tol` times the largest row
/// norm. Assignments are exact zeros so pruned rows densify cleanly.
fn prune_rows(y: &mut Array2<f64>, prune_tol: f64) {
    let norms = row_norms(y);
    let max = norms.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return;
    }
    for (j, &nrm) in norms.iter().enumerate() {
        if nrm < prune_tol * max {
            y.row_mut(j).fill(0.0);
        }
    }
}

/// Solve the SPD system `M W = RHS` by an in-place Cholesky factorization.
fn cholesky_solve(mut m: Array2<f64>, rhs: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    debug_assert_eq!(n, rhs.nrows());
    // lower-triangular factor in place
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= m[(j, k)] * m[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "Cholesky pivot {d} at index {j}"
            )));
        }
        let ljj = d.sqrt();
        m[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = s / ljj;
        }
    }
    let mut w = rhs.to_owned();
    for mut col in w.axis_iter_mut(Axis(1)) {
        // forward: L z = b
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= m[(i, k)] * col[k];
            }
            col[i] = s / m[(i, i)];
        }
        // backward: L' w = z
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= m[(k, i)] * col[k];
            }
            col[i] = s / m[(i, i)];
        }
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Regularized M-FOCUSS
// ---------------------------------------------------------------------------

/// Default initialization `Y0 = D'X`, with 1e-12 added to any exactly-zero
/// row so every row norm is nonzero.
fn mfocuss_default_init(dict: &ArrayView2<f64>, x: &ArrayView2<f64>) -> Array2<f64> {
    let mut y = dict.t().dot(x);
    for mut row in y.axis_iter_mut(Axis(0)) {
        if row.iter().all(|&v| v == 0.0) {
            row.fill(1e-12);
        }
    }
    y
}

fn mfocuss_core(
    dict: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    gamma: f64,
    config: &SolverConfig,
    mut y: Array2<f64>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let b = dict.nrows();
    // zero-solution certificate: 0 is optimal iff ||d_j' X||_2 <= gamma for
    // every atom. The multiplicative updates only approach zero
    // asymptotically, so this case is answered exactly up front.
    let corr = dict.t().dot(x);
    let cert = corr
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0f64, f64::max);
    if cert <= gamma {
        let zero = Array2::zeros(y.dim());
        let trace = vec![
            mmv_objective(dict, x, &y, gamma),
            mmv_objective(dict, x, &zero, gamma),
        ];
        return Ok((zero, trace));
    }
    let mut trace = vec![mmv_objective(dict, x, &y, gamma)];
    for _ in 0..config.max_iters {
        let lambda = row_norms(&y);
        // M = D diag(lambda) D' + gamma I, a B x B SPD system
        let mut dl = dict.to_owned();
        for (j, &l) in lambda.iter().enumerate() {
            dl.column_mut(j).mapv_inplace(|v| v * l);
        }
        let mut m = dl.dot(&dict.t());
        for i in 0..b {
            m[(i, i)] += gamma;
        }
        let w = cholesky_solve(m, x)?;
        let mut y_new = dict.t().dot(&w);
        for (j, &l) in lambda.iter().enumerate() {
            y_new.row_mut(j).mapv_inplace(|v| v * l);
        }
        let diff = frob_norm(&(&y_new - &y));
        let denom = frob_norm(&y).max(1.0);
        y = y_new;
        trace.push(mmv_objective(dict, x, &y, gamma));
        if diff / denom < config.rel_tol {
            break;
        }
    }
    prune_rows(&mut y, config.prune_tol);
    Ok((y, trace))
}

fn check_mmv(problem: &MmvProblem) -> Result<()> {
    check_gamma(problem.gamma)?;
    if problem.dictionary.nrows() != problem.signals.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bands, signals have {}",
            problem.dictionary.nrows(),
            problem.signals.nrows()
        )));
    }
    if problem.signals.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Regularized M-FOCUSS: iterates
/// `Y <- Λ D' (D Λ D' + gamma I)^{-1} X` with `Λ = diag(||row i of Y||_2)`
/// computed from the previous estimate. The returned trace holds the
/// objective at the initial point and after every update; it is
/// non-increasing. Rows below the pruning threshold are exactly zero in the
/// returned matrix.
pub fn mfocuss(
    problem: &MmvProblem,
    config: &SolverConfig,
    init: Option<&Array2<f64>>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    config.validate()?;
    check_mmv(problem)?;
    let d = &problem.dictionary;
    let x = &problem.signals;
    let y0 = match init {
        Some(y) => {
            if y.dim() != (d.ncols(), x.ncols()) {
                return Err(Error::DimensionMismatch("init shape".into()));
            }
            for (j, row) in y.axis_iter(Axis(0)).enumerate() {
                if row.iter().all(|&v| v == 0.0) {
                    return Err(Error::ZeroInitRow(j));
                }
            }
            y.to_owned()
        }
        None => mfocuss_default_init(d, x),
    };
    mfocuss_core(d, x, problem.gamma, config, y0)
}

// ---------------------------------------------------------------------------
// Row-wise BCD for the MMV problem
// ---------------------------------------------------------------------------

fn mmv_bcd_core(
    dict: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    gamma: f64,
    config: &SolverConfig,
    atom_norm2: &[f64],
    mut y: Array2<f64>,
) -> (Array2<f64>, Vec<f64>) {
    let k = dict.ncols();
    let mut residual = x.to_owned() - dict.dot(&y);
    let mut trace = vec![
        0.5 * residual.iter().map(|v| v * v).sum::<f64>() + gamma * row21_norm(&y),
    ];
    for _ in 0..config.max_iters {
        let y_prev = y.clone();
        for j in 0..k {
            let dj = dict.column(j);
            // restore the residual without atom j's contribution
            let row = y.row(j).to_owned();
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    residual.column_mut(c).scaled_add(v, &dj);
                }
            }
            let r = residual.t().dot(&dj);
            let rn = r.dot(&r).sqrt();
            if rn <= gamma {
                y.row_mut(j).fill(0.0);
            } else {
                let scale = (1.0 - gamma / rn) / atom_norm2[j];
                let new_row = r.mapv(|v| v * scale);
                for (c, &v) in new_row.iter().enumerate() {
                    if v != 0.0 {
                        residual.column_mut(c).scaled_add(-v, &dj);
                    }
                }
                y.row_mut(j).assign(&new_row);
            }
        }
        // refresh the residual once per sweep so incremental drift cannot
        // accumulate across sweeps
        residual = x.to_owned() - dict.dot(&y);
        trace.push(
            0.5 * residual.iter().map(|v| v * v).sum::<f64>() + gamma * row21_norm(&y),
        );
        let diff = frob_norm(&(&y - &y_prev));
        let denom = frob_norm(&y_prev).max(1.0);
        if diff / denom < config.rel_tol {
            break;
        }
    }
    prune_rows(&mut y, config.prune_tol);
    (y, trace)
}

/// Row-wise BCD for the joint-sparse problem; cycles rows applying the
/// group soft-threshold update
/// `Y^j = (1 - gamma/||R_j' d_j||)_+ R_j' d_j / ||d_j||^2`.
/// Same termination, trace, and pruning contract as [`mfocuss`].
pub fn mmv_bcd(problem: &MmvProblem, config: &SolverConfig) -> Result<(Array2<f64>, Vec<f64>)> {
    config.validate()?;
    check_mmv(problem)?;
    let d = &problem.dictionary;
    let atom_norm2: Vec<f64> = (0..d.ncols())
        .map(|j| {
            let col = d.column(j);
            col.dot(&col)
        })
        .collect();
    if let Some(j) = atom_norm2.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroAtom(j));
    }
    let y0 = Array2::zeros((d.ncols(), problem.signals.ncols()));
    Ok(mmv_bcd_core(
        d,
        &problem.signals,
        problem.gamma,
        config,
        &atom_norm2,
        y0,
    ))
}

// ---------------------------------------------------------------------------
// Grouped coding
// ---------------------------------------------------------------------------

fn gather_columns(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(1), idx)
}

/// Joint-sparse code every contextual group of `x` against `dict`, with the
/// per-group regularization weight taken from `schedule`. Groups are solved
/// in parallel; each writes only its own columns, so the result is
/// independent of group order and thread count.
///
/// When `warm` holds the previous codes, every group is still solved fresh
/// (M-FOCUSS cannot regrow a pruned row, so true warm starts would freeze
/// supports) and the better of {fresh solution, previous block} is kept.
/// The kept objective is therefore never above the warm block's, which is
/// what the learning loop's monotonicity rests on.
pub(crate) fn code_groups_dense(
    dict: &Array2<f64>,
    x: &Array2<f64>,
    partition: &GroupPartition,
    schedule: &RegSchedule,
    config: &SolverConfig,
    solver: MmvSolver,
    warm: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    config.validate()?;
    if dict.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bands, signals have {}",
            dict.nrows(),
            x.nrows()
        )));
    }
    if x.ncols() != partition.num_pixels() {
        return Err(Error::DimensionMismatch(format!(
            "{} signal columns vs partition over {} pixels",
            x.ncols(),
            partition.num_pixels()
        )));
    }
    let k = dict.ncols();
    if let Some(w) = warm {
        if w.dim() != (k, x.ncols()) {
            return Err(Error::DimensionMismatch("warm start shape".into()));
        }
    }
    let atom_norm2: Vec<f64> = (0..k)
        .map(|j| {
            let col = dict.column(j);
            col.dot(&col)
        })
        .collect();
    if solver == MmvSolver::Bcd {
        if let Some(j) = atom_norm2.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroAtom(j));
        }
    }
    let dview = dict.view();
    let blocks: Vec<Array2<f64>> = partition
        .groups()
        .par_iter()
        .map(|group| -> Result<Array2<f64>> {
            let xg = gather_columns(x, group);
            let gamma = schedule.gamma(group.len());
            let (fresh, _trace) = match solver {
                MmvSolver::MFocuss => {
                    let init = mfocuss_default_init(&dview, &xg.view());
                    mfocuss_core(&dview, &xg.view(), gamma, config, init)?
                }
                MmvSolver::Bcd => mmv_bcd_core(
                    &dview,
                    &xg.view(),
                    gamma,
                    config,
                    &atom_norm2,
                    Array2::zeros((k, group.len())),
                ),
            };
            let yg = match warm {
                None => fresh,
                Some(w) => {
                    let wg = gather_columns(w, group);
                    let fresh_obj = mmv_objective(&dview, &xg.view(), &fresh, gamma);
                    let warm_obj = mmv_objective(&dview, &xg.view(), &wg, gamma);
                    if warm_obj < fresh_obj {
                        wg
                    } else {
                        fresh
                    }
                }
            };
            Ok(yg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((k, x.ncols()));
    for (group, block) in partition.groups().iter().zip(blocks) {
        for (local, &p) in group.iter().enumerate() {
            out.column_mut(p).assign(&block.column(local));
        }
    }
    Ok(out)
}

/// Public entry point for grouped coding; returns sparse triplets.
pub fn code_groups(
    dict: &Array2<f64>,
    x: &Array2<f64>,
    partition: &GroupPartition,
    schedule: &RegSchedule,
    config: &SolverConfig,
    solver: MmvSolver,
) -> Result<CodeMatrix> {
    let dense = code_groups_dense(dict, x, partition, schedule, config, solver, None)?;
    Ok(CodeMatrix::from_dense(&dense))
}
