//! Linear SVM on sparse codes: binary training by dual coordinate descent
//! on the L1-hinge dual, one-vs-one multiclass by majority vote, and
//! OA/AA/kappa evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training controls for the binary solver. `seed` fixes the coordinate
/// permutation order, making training deterministic.
#[derive(Debug, Clone, Copy)]
pub struct SvmConfig {
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

/// A trained binary linear classifier `sign(w'x + b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(self.weights.len(), x.len());
        self.weights
            .iter()
            .zip(x.iter())
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias
    }

    /// Primal objective `1/2 ||w||^2 + C sum hinge`, bias included in the
    /// regularizer via the constant-feature augmentation.
    pub fn primal_objective(&self, features: ArrayView2<f64>, labels: &[i8]) -> f64 {
        let reg = 0.5
            * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let hinge: f64 = features
            .axis_iter(Axis(1))
            .zip(labels)
            .map(|(x, &l)| (1.0 - l as f64 * self.decision(x)).max(0.0))
            .sum();
        reg + self.c * hinge
    }
}

/// Train a binary linear SVM by dual coordinate descent on
/// `min 1/2 a'Qa - e'a, 0 <= a_i <= C` with `Q_ij = y_i y_j x_i'x_j`
/// (bias handled as a constant feature of value 1). Columns of `features`
/// are samples; `labels` hold +1/-1.
pub fn train_binary(
    features: ArrayView2<f64>,
    labels: &[i8],
    c: f64,
    config: &SvmConfig,
) -> Result<BinarySvm> {
    let n = features.ncols();
    let dim = features.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !labels.iter().any(|&l| l == 1) || !labels.iter().any(|&l| l == -1) {
        return Err(Error::SingleClass("labels contain a single class".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "C must be positive and finite, got {c}"
        )));
    }
    // diagonal of Q with the bias feature included
    let q_diag: Vec<f64> = (0..n)
        .map(|i| {
            let x = features.column(i);
            x.dot(&x) + 1.0
        })
        .collect();
    let mut w: Array1<f64> = Array1::zeros(dim);
    let mut bias = 0.0f64;
    let mut alpha = vec![0.0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut worst = 0.0f64;
        for &i in &order {
            let x = features.column(i);
            let y = labels[i] as f64;
            let g = y * (w.dot(&x) + bias) - 1.0;
            // projected gradient at the box constraint
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg.abs() > 1e-14 {
                let a_new = (alpha[i] - g / q_diag[i]).clamp(0.0, c);
                let delta = (a_new - alpha[i]) * y;
                if delta != 0.0 {
                    w.scaled_add(delta, &x);
                    bias += delta;
                    alpha[i] = a_new;
                }
            }
        }
        if worst < config.tol {
            break;
        }
    }
    Ok(BinarySvm {
        weights: w.to_vec(),
        bias,
        c,
    })
}

/// One binary classifier for an unordered class pair; a positive decision
/// value votes for `class_a`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairClassifier {
    pub class_a: u32,
    pub class_b: u32,
    pub svm: BinarySvm,
}

/// One-vs-one multiclass model: `M(M-1)/2` pairwise classifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OvoSvmModel {
    pub num_classes: u32,
    pub classifiers: Vec<PairClassifier>,
}

fn pair_seed(seed: u64, a: u32, b: u32) -> u64 {
    // splitmix-style mix so pairwise training is order-independent
    let mut z = seed ^ ((a as u64) << 32 | b as u64);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Train one binary classifier per unordered class pair, in parallel.
/// Columns of `features` are samples; `labels` hold class ids `1..=M`.
pub fn train_ovo(
    features: ArrayView2<f64>,
    labels: &[u32],
    num_classes: u32,
    c: f64,
    config: &SvmConfig,
) -> Result<OvoSvmModel> {
    let n = features.ncols();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if labels.iter().any(|&l| l == 0 || l > num_classes) {
        return Err(Error::InvalidArgument(
            "labels must lie in 1..=num_classes".into(),
        ));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for a in 1..=num_classes {
        for b in (a + 1)..=num_classes {
            pairs.push((a, b));
        }
    }
    let classifiers: Vec<PairClassifier> = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<PairClassifier> {
            let empty = Vec::new();
            let ia = by_class.get(&a).unwrap_or(&empty);
            let ib = by_class.get(&b).unwrap_or(&empty);
            if ia.is_empty() || ib.is_empty() {
                let missing = if ia.is_empty() { a } else { b };
                return Err(Error::SingleClass(format!(
                    "pair ({a}, {b}): class {missing} has no samples"
                )));
            }
            let idx: Vec<usize> = ia.iter().chain(ib.iter()).copied().collect();
            let sub = features.select(Axis(1), &idx);
            let sub_labels: Vec<i8> = idx
                .iter()
                .map(|&i| if labels[i] == a { 1 } else { -1 })
                .collect();
            let cfg = SvmConfig {
                seed: pair_seed(config.seed, a, b),
                ..*config
            };
            let svm = train_binary(sub.view(), &sub_labels, c, &cfg)?;
            Ok(PairClassifier {
                class_a: a,
                class_b: b,
                svm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvoSvmModel {
        num_classes,
        classifiers,
    })
}

impl OvoSvmModel {
    /// Majority vote over pairwise decisions; ties break to the lowest
    /// class id.
    pub fn predict(&self, code: ArrayView1<f64>) -> Result<u32> {
        let mut votes = vec![0u32; self.num_classes as usize + 1];
        for pc in &self.classifiers {
            if pc.svm.weights.len() != code.len() {
                return Err(Error::DimensionMismatch(format!(
                    "model expects {} features, got {}",
                    pc.svm.weights.len(),
                    code.len()
                )));
            }
            let winner = if pc.svm.decision(code) >= 0.0 {
                pc.class_a
            } else {
                pc.class_b
            };
            votes[winner as usize] += 1;
        }
        let mut best = 1u32;
        for class in 1..=self.num_classes {
            if votes[class as usize] > votes[best as usize] {
                best = class;
            }
        }
        Ok(best)
    }

    /// Predict every column of `codes` in parallel.
    pub fn predict_batch(&self, codes: ArrayView2<f64>) -> Result<Vec<u32>> {
        (0..codes.ncols())
            .into_par_iter()
            .map(|i| self.predict(codes.column(i)))
            .collect()
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
        serde_json::from_str(&text).map_err(|e| Error::HeaderParse(e.to_string()))
    }
}

/// Confusion matrix (rows = truth, cols = prediction) with the derived
/// accuracy measures. `per_class_acc` is `None` for classes absent from the
/// truth vector; AA averages over present classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Vec<Vec<u64>>,
    pub per_class_acc: Vec<Option<f64>>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

/// Compute OA (trace ratio), AA (mean per-class recall), and the
/// chance-corrected kappa `(p_o - p_e) / (1 - p_e)`,
/// `p_e = sum_k row_k col_k / total^2`.
pub fn evaluate(predictions: &[u32], truth: &[u32], num_classes: u32) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), truth.len()));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = num_classes as usize;
    for &v in predictions.iter().chain(truth.iter()) {
        if v == 0 || v as usize > m {
            return Err(Error::InvalidArgument(format!(
                "class id {v} outside 1..={m}"
            )));
        }
    }
    let mut confusion = vec![vec![0u64; m]; m];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t as usize - 1][p as usize - 1] += 1;
    }
    let total: u64 = predictions.len() as u64;
    let totalf = total as f64;
    let trace: u64 = (0..m).map(|i| confusion[i][i]).sum();
    let oa = trace as f64 / totalf;
    let mut per_class_acc = Vec::with_capacity(m);
    let mut aa_sum = 0.0;
    let mut aa_count = 0usize;
    for (i, row) in confusion.iter().enumerate() {
        let row_total: u64 = row.iter().sum();
        if row_total == 0 {
            per_class_acc.push(None);
        } else {
            let acc = confusion[i][i] as f64 / row_total as f64;
            per_class_acc.push(Some(acc));
            aa_sum += acc;
            aa_count += 1;
        }
    }
    let aa = aa_sum / aa_count as f64;
    let mut pe = 0.0;
    for i in 0..m {
        let row_total: u64 = confusion[i].iter().sum();
        let col_total: u64 = (0..m).map(|r| confusion[r][i]).sum();
        pe += (row_total as f64) * (col_total as f64);
    }
    pe /= totalf * totalf;
    let kappa = if (1.0 - pe).abs() < f64::EPSILON {
        1.0
    } else {
        (oa - pe) / (1.0 - pe)
    };
    Ok(EvalReport {
        confusion,
        per_class_acc,
        oa,
        aa,
        kappa,
    })
}

/// Stratified k-fold cross validation: mean fold OA for every C in the
/// grid, returned in ascending C order. Deterministic given `seed`.
pub fn cross_validate_scores(
    features: ArrayView2<f64>,
    labels: &[u32],
    num_classes: u32,
    c_grid: &[f64],
    folds: usize,
    seed: u64,
    config: &SvmConfig,
) -> Result<Vec<(f64, f64)>> {
    let n = features.ncols();
    if n == 0 || c_grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be >= 2".into()));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for (&class, members) in &by_class {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall(class));
        }
    }
    // deal each class round-robin across folds after a seeded shuffle
    let mut fold_of = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (pos, &i) in shuffled.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    let mut grid: Vec<f64> = c_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut scores = Vec::with_capacity(grid.len());
    for &c in &grid {
        let mut oa_sum = 0.0;
        let mut oa_count = 0usize;
        for fold in 0..folds {
            let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            if test_idx.is_empty() {
                continue;
            }
            let train_x = features.select(Axis(1), &train_idx);
            let train_l: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
            let model = train_ovo(train_x.view(), &train_l, num_classes, c, config)?;
            let mut correct = 0usize;
            for &i in &test_idx {
                if model.predict(features.column(i))? == labels[i] {
                    correct += 1;
                }
            }
            oa_sum += correct as f64 / test_idx.len() as f64;
            oa_count += 1;
        }
        scores.push((c, oa_sum / oa_count.max(1) as f64));
    }
    Ok(scores)
}

/// Pick the C with the highest mean fold OA; ties break toward the
/// smallest C.
pub fn cross_validate(
    features: ArrayView2<f64>,
    labels: &[u32],
    num_classes: u32,
    c_grid: &[f64],
    folds: usize,
    seed: u64,
    config: &SvmConfig,
) -> Result<f64> {
    let scores = cross_validate_scores(features, labels, num_classes, c_grid, folds, seed, config)?;
    let mut best = scores[0];
    for &(c, score) in &scores[1..] {
        if score > best.1 {
            best = (c, score);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn binary_separable_1d() {
        let x = array![[-2.0, 2.0]];
        let labels = [-1i8, 1];
        let svm = train_binary(x.view(), &labels, 10.0, &SvmConfig::default()).unwrap();
        assert!(svm.decision(array![-2.0].view()) < 0.0);
        assert!(svm.decision(array![2.0].view()) > 0.0);
    }

    #[test]
    fn binary_contradictory_point_trains() {
        let x = array![[1.0, 1.0], [2.0, 2.0]];
        let labels = [1i8, -1];
        let svm = train_binary(x.view(), &labels, 1.0, &SvmConfig::default()).unwrap();
        assert!(svm.decision(x.column(0)).is_finite());
    }

    #[test]
    fn binary_rejects_single_class() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            train_binary(x.view(), &[1, 1], 1.0, &SvmConfig::default()),
            Err(Error::SingleClass(_))
        ));
        assert!(matches!(
            train_binary(
                Array2::<f64>::zeros((2, 0)).view(),
                &[],
                1.0,
                &SvmConfig::default()
            ),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn ovo_pair_counts() {
        let dim = 2;
        for m in [3u32, 16] {
            let n = (m * 2) as usize;
            let mut x = Array2::zeros((dim, n));
            let mut labels = Vec::new();
            for i in 0..n {
                let class = (i as u32 % m) + 1;
                x[(0, i)] = class as f64;
                x[(1, i)] = (i / m as usize) as f64;
                labels.push(class);
            }
            let model =
                train_ovo(x.view(), &labels, m, 1.0, &SvmConfig::default()).unwrap();
            assert_eq!(model.classifiers.len(), (m * (m - 1) / 2) as usize);
        }
    }

    #[test]
    fn ovo_missing_class_is_reported() {
        let x = array![[1.0, 2.0, 3.0], [0.0, 1.0, 0.0]];
        let labels = [1u32, 1, 2];
        let err = train_ovo(x.view(), &labels, 3, 1.0, &SvmConfig::default());
        match err {
            Err(Error::SingleClass(msg)) => {
                assert!(msg.contains("3"), "message should name the pair: {msg}")
            }
            other => panic!("expected SingleClass, got {other:?}"),
        }
    }

    #[test]
    fn predict_majority_and_tie_break() {
        // hand-built cyclic model over 3 classes: A beats B, B beats C, C beats A
        let mk = |wa: f64, class_a, class_b| PairClassifier {
            class_a,
            class_b,
            svm: BinarySvm {
                weights: vec![wa],
                bias: 0.0,
                c: 1.0,
            },
        };
        let model = OvoSvmModel {
            num_classes: 3,
            classifiers: vec![mk(1.0, 1, 2), mk(1.0, 2, 3), mk(-1.0, 1, 3)],
        };
        // x = [1]: (1,2) votes 1, (2,3) votes 2, (1,3) votes 3 -> tie -> class 1
        let pred = model.predict(array![1.0].view()).unwrap();
        assert_eq!(pred, 1);
    }

    #[test]
    fn predict_two_class_equals_binary_decision() {
        let model = OvoSvmModel {
            num_classes: 2,
            classifiers: vec![PairClassifier {
                class_a: 1,
                class_b: 2,
                svm: BinarySvm {
                    weights: vec![1.0],
                    bias: -0.5,
                    c: 1.0,
                },
            }],
        };
        assert_eq!(model.predict(array![1.0].view()).unwrap(), 1);
        assert_eq!(model.predict(array![0.0].view()).unwrap(), 2);
    }

    #[test]
    fn evaluate_known_matrices() {
        // diagonal: OA = AA = kappa = 1
        let preds = [1u32, 1, 2, 2];
        let truth = [1u32, 1, 2, 2];
        let r = evaluate(&preds, &truth, 2).unwrap();
        assert_eq!(r.oa, 1.0);
        assert_eq!(r.aa, 1.0);
        assert_eq!(r.kappa, 1.0);

        // uniform confusion: OA = 0.5, kappa = 0
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for (t, p, count) in [(1u32, 1u32, 25), (1, 2, 25), (2, 1, 25), (2, 2, 25)] {
            for _ in 0..count {
                truth.push(t);
                preds.push(p);
            }
        }
        let r = evaluate(&preds, &truth, 2).unwrap();
        assert!((r.oa - 0.5).abs() < 1e-15);
        assert!(r.kappa.abs() < 1e-15);
    }

    #[test]
    fn evaluate_hand_computed_offdiagonal() {
        // confusion [[40,10],[20,30]]
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for (t, p, count) in [(1u32, 1u32, 40), (1, 2, 10), (2, 1, 20), (2, 2, 30)] {
            for _ in 0..count {
                truth.push(t);
                preds.push(p);
            }
        }
        let r = evaluate(&preds, &truth, 2).unwrap();
        assert!((r.oa - 0.7).abs() < 1e-12);
        assert!((r.aa - 0.7).abs() < 1e-12);
        assert!((r.kappa - 0.4).abs() < 1e-12);
    }

    #[test]
    fn evaluate_errors() {
        assert!(matches!(
            evaluate(&[1], &[1, 2], 2),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(evaluate(&[], &[], 2), Err(Error::EmptyInput)));
    }

    fn blobs(n_per: usize, centers: &[(f64, f64)], spread: f64, seed: u64) -> (Array2<f64>, Vec<u32>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_per * centers.len();
        let mut x = Array2::zeros((2, n));
        let mut labels = Vec::with_capacity(n);
        let mut i = 0;
        for (ci, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..n_per {
                x[(0, i)] = cx + rng.random_range(-spread..spread);
                x[(1, i)] = cy + rng.random_range(-spread..spread);
                labels.push(ci as u32 + 1);
                i += 1;
            }
        }
        (x, labels)
    }

    #[test]
    fn cross_validate_deterministic_and_single_point() {
        let (x, labels) = blobs(10, &[(0.0, 0.0), (5.0, 5.0)], 0.5, 3);
        let cfg = SvmConfig::default();
        let c1 = cross_validate(x.view(), &labels, 2, &[1.0], 5, 7, &cfg).unwrap();
        assert_eq!(c1, 1.0);
        let a = cross_validate(x.view(), &labels, 2, &[0.1, 10.0], 5, 9, &cfg).unwrap();
        let b = cross_validate(x.view(), &labels, 2, &[0.1, 10.0], 5, 9, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_validate_class_too_small() {
        let x = array![[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]];
        let labels = [1u32, 1, 2];
        assert!(matches!(
            cross_validate(x.view(), &labels, 2, &[1.0], 5, 0, &SvmConfig::default()),
            Err(Error::ClassTooSmall(2))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = OvoSvmModel {
            num_classes: 2,
            classifiers: vec![PairClassifier {
                class_a: 1,
                class_b: 2,
                svm: BinarySvm {
                    weights: vec![0.123456789012345, -7.5],
                    bias: 0.25,
                    c: 10.0,
                },
            }],
        };
        model.save(&path).unwrap();
        let back = OvoSvmModel::load(&path).unwrap();
        assert_eq!(back.num_classes, 2);
        assert_eq!(back.classifiers[0].svm.weights, model.classifiers[0].svm.weights);
        assert_eq!(back.classifiers[0].svm.bias, model.classifiers[0].svm.bias);
    }
}
