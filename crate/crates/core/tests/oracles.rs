//! Independent-oracle checks: each test recomputes the expected answer by a
//! different route than the implementation under test.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scdl_core::classify::{cross_validate, train_binary, SvmConfig};
use scdl_core::learn::{
    init_dictionary, learn, update_dictionary, CodingModel, LearnConfig, RegSchedule,
};
use scdl_core::solvers::{code_groups, lasso_cd, LassoProblem, MmvSolver, SolverConfig};
use scdl_core::synthetic::{planted_joint_sparse, PlantedConfig};
use scdl_core::{partition_into_patches, Dictionary};

fn unit_column_dictionary(bands: usize, atoms: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d = Array2::zeros((bands, atoms));
    for j in 0..atoms {
        let col: Array1<f64> = Array1::from_iter((0..bands).map(|_| normal.sample(rng)));
        let norm = col.dot(&col).sqrt();
        d.column_mut(j).assign(&col.mapv(|v| v / norm));
    }
    d
}

/// Dense linear solve by Gaussian elimination with partial pivoting;
/// deliberately separate from the library's factorization code.
fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for k in 0..n {
        let mut pivot = k;
        for i in (k + 1)..n {
            if m[(i, k)].abs() > m[(pivot, k)].abs() {
                pivot = i;
            }
        }
        if m[(pivot, k)].abs() < 1e-12 {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(pivot, j)];
                m[(pivot, j)] = tmp;
            }
            rhs.swap(k, pivot);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

fn lasso_objective(d: &Array2<f64>, x: &Array1<f64>, y: &Array1<f64>, gamma: f64) -> f64 {
    let r = x - &d.dot(y);
    0.5 * r.dot(&r) + gamma * y.iter().map(|v| v.abs()).sum::<f64>()
}

/// Exhaustive Lasso oracle: enumerate every support and sign pattern, solve
/// the sign-consistent stationarity system on the support, and keep the best
/// feasible objective.
fn lasso_enumeration_oracle(d: &Array2<f64>, x: &Array1<f64>, gamma: f64) -> f64 {
    let k = d.ncols();
    let mut best = 0.5 * x.dot(x); // empty support
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
        let m = support.len();
        let ds = d.select(Axis(1), &support);
        let gram = ds.t().dot(&ds);
        let corr = ds.t().dot(x);
        for signs in 0u32..(1 << m) {
            let s: Array1<f64> = Array1::from_iter(
                (0..m).map(|i| if signs >> i & 1 == 1 { -1.0 } else { 1.0 }),
            );
            let rhs = &corr - &s.mapv(|v| v * gamma);
            let Some(ys) = solve_dense(&gram, &rhs) else {
                continue;
            };
            // keep only sign-consistent stationary points
            if ys.iter().zip(s.iter()).any(|(&y, &sg)| y * sg <= 0.0) {
                continue;
            }
            let mut full = Array1::zeros(k);
            for (i, &j) in support.iter().enumerate() {
                full[j] = ys[i];
            }
            best = best.min(lasso_objective(d, x, &full, gamma));
        }
    }
    best
}

#[test]
fn lasso_cd_matches_support_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = SolverConfig {
        max_iters: 5000,
        rel_tol: 1e-10,
        prune_tol: 1e-12,
    };
    for trial in 0..20 {
        let d = unit_column_dictionary(8, 5, &mut rng);
        let x: Array1<f64> = Array1::from_iter((0..8).map(|_| rng.random_range(-1.0..1.0)));
        let gamma = 0.1;
        let (_, obj) = lasso_cd(
            &LassoProblem {
                dictionary: d.view(),
                signal: x.view(),
                gamma,
                nonneg: false,
            },
            &config,
        )
        .unwrap();
        let oracle = lasso_enumeration_oracle(&d, &x, gamma);
        assert!(
            (obj - oracle).abs() <= 1e-8 * oracle.max(1.0),
            "trial {trial}: cd objective {obj} vs oracle {oracle}"
        );
    }
}

/// Naive dictionary-update oracle: replay the BCD sweep with full residual
/// recomputation `R_j = X - sum_{i != j} d_i (Y^i)'` at every atom.
fn naive_update_sweep(d0: &Array2<f64>, x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let (bands, k) = d0.dim();
    let mut d = d0.clone();
    for j in 0..k {
        let row = y.row(j);
        let row_norm2 = row.dot(&row);
        if row_norm2 == 0.0 {
            continue;
        }
        let mut rj = x.clone();
        for i in 0..k {
            if i == j {
                continue;
            }
            let di = d.column(i).to_owned();
            let yi = y.row(i);
            for c in 0..x.ncols() {
                for b in 0..bands {
                    rj[(b, c)] -= di[b] * yi[c];
                }
            }
        }
        let mut numerator: Array1<f64> = Array1::zeros(bands);
        for c in 0..x.ncols() {
            for b in 0..bands {
                numerator[b] += rj[(b, c)] * row[c];
            }
        }
        let mut atom: Array1<f64> = numerator.mapv(|v| v / row_norm2);
        let norm = atom.dot(&atom).sqrt();
        if norm > 1.0 {
            atom.mapv_inplace(|v| v / norm);
        }
        d.column_mut(j).assign(&atom);
    }
    d
}

#[test]
fn dictionary_update_matches_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..10 {
        let (bands, k, n) = (10, 5, 40);
        let d0 = unit_column_dictionary(bands, k, &mut rng);
        let x = Array2::from_shape_fn((bands, n), |_| rng.random_range(-1.0..1.0));
        // sparse-ish codes with no all-zero rows
        let mut y = Array2::zeros((k, n));
        for j in 0..k {
            for c in 0..n {
                if rng.random_range(0.0..1.0) < 0.4 {
                    y[(j, c)] = rng.random_range(-2.0..2.0);
                }
            }
            if y.row(j).iter().all(|&v| v == 0.0) {
                y[(j, trial % n)] = 1.0;
            }
        }
        let fit_before = {
            let r = &x - &d0.dot(&y);
            0.5 * r.iter().map(|v| v * v).sum::<f64>()
        };
        let dict0 = Dictionary::new(d0.clone()).unwrap();
        let updated = update_dictionary(&dict0, &x, &y).unwrap();
        let expected = naive_update_sweep(&d0, &x, &y);
        for j in 0..k {
            for b in 0..bands {
                assert!(
                    (updated.array()[(b, j)] - expected[(b, j)]).abs() < 1e-10,
                    "trial {trial}: atom {j} band {b} differs"
                );
            }
        }
        let fit_after = {
            let r = &x - &updated.array().dot(&y);
            0.5 * r.iter().map(|v| v * v).sum::<f64>()
        };
        assert!(
            fit_after <= fit_before + 1e-10,
            "trial {trial}: fit increased {fit_before} -> {fit_after}"
        );
        // constraint holds after the update
        for j in 0..k {
            let a = updated.atom(j);
            assert!(a.dot(&a).sqrt() <= 1.0 + 1e-12);
        }
    }
}

/// Projected-gradient solver on the SVM dual (box constraints), deliberately
/// a different algorithm from the dual coordinate descent under test.
fn svm_dual_projected_gradient(
    features: &Array2<f64>,
    labels: &[i8],
    c: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let n = features.ncols();
    let dim = features.nrows();
    // Q_ij = y_i y_j (x_i'x_j + 1), the +1 being the bias feature
    let mut q = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let xi = features.column(i);
            let xj = features.column(j);
            q[(i, j)] = labels[i] as f64 * labels[j] as f64 * (xi.dot(&xj) + 1.0);
        }
    }
    let lip: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = 1.0 / lip;
    let ones: Array1<f64> = Array1::ones(n);
    let mut alpha: Array1<f64> = Array1::zeros(n);
    for _ in 0..iters {
        let grad: Array1<f64> = q.dot(&alpha) - &ones;
        alpha = (alpha - grad.mapv(|g| g * step)).mapv(|a: f64| a.clamp(0.0, c));
    }
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    for i in 0..n {
        let coef = alpha[i] * labels[i] as f64;
        for (widx, wv) in w.iter_mut().enumerate() {
            *wv += coef * features[(widx, i)];
        }
        b += coef;
    }
    (w, b)
}

fn primal_objective(
    w: &[f64],
    b: f64,
    features: &Array2<f64>,
    labels: &[i8],
    c: f64,
) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let hinge: f64 = (0..features.ncols())
        .map(|i| {
            let x = features.column(i);
            let decision: f64 =
                w.iter().zip(x.iter()).map(|(wv, xv)| wv * xv).sum::<f64>() + b;
            (1.0 - labels[i] as f64 * decision).max(0.0)
        })
        .sum();
    reg + c * hinge
}

#[test]
fn svm_objective_matches_slow_dual_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let config = SvmConfig {
        tol: 1e-7,
        max_epochs: 50_000,
        seed: 5,
    };
    for trial in 0..10 {
        let n = 24;
        let dim = 4;
        let features = Array2::from_shape_fn((dim, n), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let c = if trial % 2 == 0 { 0.5 } else { 2.0 };
        let svm = train_binary(features.view(), &labels, c, &config).unwrap();
        let fast = primal_objective(&svm.weights, svm.bias, &features, &labels, c);
        let (w_slow, b_slow) = svm_dual_projected_gradient(&features, &labels, c, 200_000);
        let slow = primal_objective(&w_slow, b_slow, &features, &labels, c);
        assert!(
            (fast - slow).abs() <= 1e-3 * slow.abs().max(1e-9),
            "trial {trial}: fast {fast} vs slow {slow}"
        );
    }
}

#[test]
fn svm_separates_generated_margin_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dim = 5;
    let n = 200;
    let normal = Normal::new(0.0, 1.0).unwrap();
    // fixed separator with guaranteed margin 0.5 along it
    let mut sep: Array1<f64> = Array1::from_iter((0..dim).map(|_| normal.sample(&mut rng)));
    let norm = sep.dot(&sep).sqrt();
    sep.mapv_inplace(|v| v / norm);
    let mut features = Array2::zeros((dim, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let raw: Array1<f64> = Array1::from_iter((0..dim).map(|_| normal.sample(&mut rng)));
        let perp = &raw - &sep.mapv(|v| v * raw.dot(&sep));
        let along = rng.random_range(0.5..1.5) * label as f64;
        let point = perp + sep.mapv(|v| v * along);
        features.column_mut(i).assign(&point);
        labels.push(label);
    }
    let svm = train_binary(features.view(), &labels, 100.0, &SvmConfig::default()).unwrap();
    let correct = (0..n)
        .filter(|&i| {
            let d = svm.decision(features.column(i));
            (d > 0.0) == (labels[i] > 0)
        })
        .count();
    assert_eq!(correct, n, "separable data must be fit exactly");
}

#[test]
fn cross_validate_prefers_separating_c() {
    // tiny feature scale + 9:1 class imbalance: C = 0.001 cannot move the
    // decision away from the majority bias, C = 100 separates cleanly
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n_major = 90;
    let n_minor = 10;
    let n = n_major + n_minor;
    let mut features = Array2::zeros((2, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (center, class) = if i < n_major {
            ((0.05, 0.05), 1u32)
        } else {
            ((-0.05, -0.05), 2u32)
        };
        features[(0, i)] = center.0 + rng.random_range(-0.01..0.01);
        features[(1, i)] = center.1 + rng.random_range(-0.01..0.01);
        labels.push(class);
    }
    let chosen = cross_validate(
        features.view(),
        &labels,
        2,
        &[0.001, 100.0],
        5,
        3,
        &SvmConfig::default(),
    )
    .unwrap();
    assert_eq!(chosen, 100.0);
}

/// The generator doubles as the oracle: the planted pair already achieves
/// about 0.01 relative fit, so a learner reaching 0.05 within 30 iterations
/// has genuinely explained the data.
#[test]
fn planted_model_fit_within_thirty_iterations() {
    let model = planted_joint_sparse(&PlantedConfig {
        bands: 16,
        atoms: 20,
        groups: 50,
        group_size: 8,
        support: 3,
        noise_std: 0.01,
        seed: 5,
    })
    .unwrap();
    let x = &model.signals;
    // sanity: the planted pair itself sits near the noise floor
    let planted_codes = {
        let mut y = Array2::zeros((20, x.ncols()));
        // least-squares per group on the planted support would be exact; the
        // generator's residual is pure noise, so compare against x - noise
        // indirectly through the planted dictionary reconstruction bound
        for (g, group) in model.partition.groups().iter().enumerate() {
            let support = &model.supports[g];
            // project each column onto the planted support atoms
            let ds = model.dictionary.select(Axis(1), support);
            let gram = ds.t().dot(&ds);
            for &p in group {
                let rhs = ds.t().dot(&x.column(p));
                // tiny SPD solve by Cholesky-free Gaussian elimination
                let sol = solve_dense(&gram, &rhs).unwrap();
                for (i, &a) in support.iter().enumerate() {
                    y[(a, p)] = sol[i];
                }
            }
        }
        y
    };
    let planted_residual = x - &model.dictionary.dot(&planted_codes);
    let planted_fit = planted_residual.iter().map(|v| v * v).sum::<f64>().sqrt()
        / x.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(
        planted_fit < 0.03,
        "planted model should sit near the noise floor, got {planted_fit}"
    );

    let init = init_dictionary(x, 20, 55).unwrap();
    let out = learn(
        x,
        &init,
        &CodingModel::JointSparse {
            schedule: RegSchedule::new(0.01).unwrap(),
            solver: MmvSolver::MFocuss,
        },
        Some(&model.partition),
        &LearnConfig {
            outer_iters: 30,
            outer_rel_tol: 1e-9,
            inner: SolverConfig::default(),
        },
    )
    .unwrap();
    assert!(out.report.iterations.len() <= 30);
    let codes = out.codes.to_dense();
    let residual = x - &out.dictionary.array().dot(&codes);
    let rel_fit = residual.iter().map(|v| v * v).sum::<f64>().sqrt()
        / x.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(
        rel_fit <= 0.05,
        "learned fit {rel_fit} above 0.05 within 30 iterations"
    );
}

#[test]
fn singleton_groups_match_per_pixel_lasso() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (bands, atoms, n) = (10, 6, 12);
    let dict = unit_column_dictionary(bands, atoms, &mut rng);
    let x = Array2::from_shape_fn((bands, n), |_| rng.random_range(-1.0..1.0));
    let partition = partition_into_patches(1, n, 1).unwrap();
    let schedule = RegSchedule::new(0.05).unwrap();
    let gamma = schedule.gamma(1); // = 2 * sigma^2
    let config = SolverConfig {
        max_iters: 2000,
        rel_tol: 1e-9,
        prune_tol: 1e-10,
    };
    let codes = code_groups(&dict, &x, &partition, &schedule, &config, MmvSolver::MFocuss)
        .unwrap()
        .to_dense();
    for i in 0..n {
        let xi = x.column(i).to_owned();
        let yi = codes.column(i).to_owned();
        let grouped_obj = lasso_objective(&dict, &xi, &yi, gamma);
        let (_, lasso_obj) = lasso_cd(
            &LassoProblem {
                dictionary: dict.view(),
                signal: x.column(i),
                gamma,
                nonneg: false,
            },
            &config,
        )
        .unwrap();
        assert!(
            (grouped_obj - lasso_obj).abs() <= 1e-4 * lasso_obj.abs().max(1e-9),
            "pixel {i}: grouped {grouped_obj} vs lasso {lasso_obj}"
        );
    }
}
