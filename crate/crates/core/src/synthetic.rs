//! Deterministic synthetic data: planted joint-sparse models and two-class
//! scenes. Used by the test suites, the benchmarks, and the CLI quickstart
//! example.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::context::{partition_into_patches, GroupPartition};
use crate::data::{HsiCube, LabelEntry, LabelMap};
use crate::error::Result;
use crate::msi::{apply_binner, make_binner, BinCoverage};

/// Parameters of a planted row-sparse dictionary model.
#[derive(Debug, Clone, Copy)]
pub struct PlantedConfig {
    pub bands: usize,
    pub atoms: usize,
    pub groups: usize,
    pub group_size: usize,
    pub support: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// A generated instance: every group of `group_size` consecutive columns
/// shares one random atom support.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    /// `bands x (groups * group_size)` noisy signals.
    pub signals: Array2<f64>,
    /// The planted unit-norm dictionary.
    pub dictionary: Array2<f64>,
    /// Groups of consecutive columns, expressed as a 1-row image partition.
    pub partition: GroupPartition,
    /// Planted support per group.
    pub supports: Vec<Vec<usize>>,
}

fn random_unit_atoms(bands: usize, atoms: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut d = Array2::zeros((bands, atoms));
    for j in 0..atoms {
        loop {
            let col: Array1<f64> =
                Array1::from_iter((0..bands).map(|_| normal.sample(rng)));
            let norm = col.dot(&col).sqrt();
            if norm > 1e-9 {
                d.column_mut(j).assign(&col.mapv(|v| v / norm));
                break;
            }
        }
    }
    d
}

fn distinct_indices(pool: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool).collect();
    for i in 0..count {
        let j = rng.random_range(i..pool);
        idx.swap(i, j);
    }
    idx.truncate(count);
    idx
}

/// Generate a planted instance. Deterministic given the config.
pub fn planted_joint_sparse(config: &PlantedConfig) -> Result<PlantedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dictionary = random_unit_atoms(config.bands, config.atoms, &mut rng);
    let n = config.groups * config.group_size;
    let mut signals = Array2::zeros((config.bands, n));
    let normal = Normal::new(0.0, config.noise_std).unwrap();
    let mut supports = Vec::with_capacity(config.groups);
    for g in 0..config.groups {
        let support = distinct_indices(config.atoms, config.support, &mut rng);
        for local in 0..config.group_size {
            let col = g * config.group_size + local;
            let mut pixel: Array1<f64> = Array1::zeros(config.bands);
            for &atom in &support {
                let coeff = rng.random_range(0.5..1.5);
                pixel.scaled_add(coeff, &dictionary.column(atom));
            }
            for b in 0..config.bands {
                pixel[b] += normal.sample(&mut rng);
            }
            signals.column_mut(col).assign(&pixel);
        }
        supports.push(support);
    }
    let partition = partition_into_patches(1, n, config.group_size)?;
    Ok(PlantedModel {
        signals,
        dictionary,
        partition,
        supports,
    })
}

/// Parameters of a two-class labeled scene. The left half of the image is
/// class 1, the right half class 2; each class mixes its own disjoint set
/// of three planted atoms with per-pixel random weights.
///
/// `noise_var` is the absolute per-element noise variance; the clean signal
/// is rescaled so the scene hits `snr_db` exactly. Keeping the noise
/// variance fixed lets a known regularization schedule match the scene.
#[derive(Debug, Clone, Copy)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub snr_db: f64,
    pub noise_var: f64,
    pub seed: u64,
    /// When set to `(bins, max_corr)`, atoms are redrawn until the binned
    /// class signatures have absolute correlation below `max_corr` under a
    /// full-coverage binner with that many bins.
    pub binned_check: Option<(usize, f64)>,
}

/// A generated labeled scene.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cube: HsiCube,
    pub labels: LabelMap,
    pub atoms: Array2<f64>,
    pub class_supports: [Vec<usize>; 2],
}

fn binned_signature_correlation(
    atoms: &Array2<f64>,
    supports: &[Vec<usize>; 2],
    bins: usize,
) -> Result<f64> {
    let bands = atoms.nrows();
    let mut signatures = Array2::zeros((bands, 2));
    for (c, support) in supports.iter().enumerate() {
        for &a in support {
            let col = atoms.column(a).to_owned() + &signatures.column(c);
            signatures.column_mut(c).assign(&col);
        }
    }
    let binner = make_binner(bands, bins, BinCoverage::Full)?;
    let z = apply_binner(&binner, &signatures)?;
    let a = z.column(0);
    let b = z.column(1);
    let denom = (a.dot(&a).sqrt() * b.dot(&b).sqrt()).max(1e-30);
    Ok((a.dot(&b) / denom).abs())
}

/// Generate a two-class scene at the requested per-element SNR.
pub fn two_class_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    let n_atoms = 6;
    let supports = [vec![0usize, 1, 2], vec![3usize, 4, 5]];
    let mut attempt = 0u64;
    let atoms = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(attempt));
        let candidate = random_unit_atoms(config.bands, n_atoms, &mut rng);
        match config.binned_check {
            None => break candidate,
            Some((bins, max_corr)) => {
                if binned_signature_correlation(&candidate, &supports, bins)? < max_corr {
                    break candidate;
                }
                attempt += 1;
                assert!(attempt < 100, "could not draw distinguishable atoms");
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(31).wrapping_add(7));
    let n = config.height * config.width;
    let mut clean = Array2::zeros((config.bands, n));
    let mut entries = Vec::with_capacity(n);
    for r in 0..config.height {
        for c in 0..config.width {
            let class = if c < config.width / 2 { 0usize } else { 1 };
            let p = r * config.width + c;
            let mut pixel: Array1<f64> = Array1::zeros(config.bands);
            for &atom in &supports[class] {
                let coeff = rng.random_range(0.5..1.5);
                pixel.scaled_add(coeff, &atoms.column(atom));
            }
            clean.column_mut(p).assign(&pixel);
            entries.push(LabelEntry {
                row: r as u32,
                col: c as u32,
                class_id: class as u32 + 1,
            });
        }
    }
    // rescale the clean signal so the fixed noise variance meets the SNR
    let raw_power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let target_power = config.noise_var * 10f64.powf(config.snr_db / 10.0);
    let scale = (target_power / raw_power).sqrt();
    clean.mapv_inplace(|v| v * scale);
    let normal = Normal::new(0.0, config.noise_var.sqrt()).unwrap();
    let mut values = vec![0.0f32; n * config.bands];
    for b in 0..config.bands {
        for p in 0..n {
            values[b * n + p] = (clean[(b, p)] + normal.sample(&mut rng)) as f32;
        }
    }
    let cube = HsiCube::new(config.height, config.width, config.bands, values, None)?;
    Ok(SyntheticScene {
        cube,
        labels: LabelMap::new(entries),
        atoms,
        class_supports: supports,
    })
}
