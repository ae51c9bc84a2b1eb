//! Shared pipeline machinery: data loading, mode-dependent features and
//! coding, SVM fitting with cross-validated C, and report/image writers.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::Serialize;

use scdl_core::classify::{cross_validate, evaluate, train_ovo, EvalReport, OvoSvmModel, SvmConfig};
use scdl_core::context::{partition_into_patches, window_moments, GroupPartition};
use scdl_core::data::{load_cube, load_labels, split_labels, HsiCube, LabelMap};
use scdl_core::learn::{CodingModel, RegSchedule};
use scdl_core::solvers::{code_groups, code_samples};
use scdl_core::Dictionary;

use crate::config::{Mode, PipelineConfig, SplitSpec};
use crate::AppError;

pub struct SceneData {
    pub cube: HsiCube,
    pub labels: LabelMap,
}

pub fn load_scene(config: &PipelineConfig) -> Result<SceneData, AppError> {
    let cube = load_cube(&config.cube)?;
    let labels = load_labels(&config.labels, cube.height(), cube.width())?;
    labels.validate_contiguous()?;
    if labels.is_empty() {
        return Err(AppError::Data(scdl_core::Error::EmptyInput));
    }
    Ok(SceneData { cube, labels })
}

pub fn split(
    config: &PipelineConfig,
    data: &SceneData,
    seed: u64,
) -> Result<(LabelMap, LabelMap), AppError> {
    match &config.split {
        SplitSpec::Fraction(fraction) => {
            Ok(split_labels(&data.labels, *fraction, seed)?)
        }
        SplitSpec::Files { train, test } => {
            let h = data.cube.height();
            let w = data.cube.width();
            let train = load_labels(train, h, w)?;
            let test = load_labels(test, h, w)?;
            if train.is_empty() || test.is_empty() {
                return Err(AppError::Data(scdl_core::Error::EmptyTestSet));
            }
            Ok((train, test))
        }
    }
}

/// Mode-dependent signal matrix over every pixel: raw spectra for sdl/scdl,
/// window moments for cdl. Columns follow pixel index `row * width + col`.
pub fn feature_matrix(config: &PipelineConfig, cube: &HsiCube) -> Result<Array2<f64>, AppError> {
    match config.mode {
        Mode::Sdl | Mode::Scdl => Ok(cube.to_spectra()),
        Mode::Cdl => {
            let centers: Vec<(usize, usize)> = (0..cube.height())
                .flat_map(|r| (0..cube.width()).map(move |c| (r, c)))
                .collect();
            let feats = window_moments(cube, &centers, config.window, config.moments)?;
            Ok(feats.into_values())
        }
    }
}

pub fn contextual_partition(
    config: &PipelineConfig,
    cube: &HsiCube,
) -> Result<Option<GroupPartition>, AppError> {
    match config.mode {
        Mode::Scdl => Ok(Some(partition_into_patches(
            cube.height(),
            cube.width(),
            config.patch,
        )?)),
        _ => Ok(None),
    }
}

pub fn coding_model(config: &PipelineConfig, gamma: f64) -> Result<CodingModel, AppError> {
    Ok(match config.mode {
        Mode::Scdl => CodingModel::JointSparse {
            schedule: RegSchedule::new(config.sigma2)?,
            solver: config.solver,
        },
        Mode::Sdl => CodingModel::Lasso {
            gamma,
            nonneg: config.nonneg,
        },
        Mode::Cdl => CodingModel::Lasso {
            gamma,
            nonneg: false,
        },
    })
}

/// Code every pixel with a fixed dictionary under the mode's regularizer.
pub fn code_all_pixels(
    config: &PipelineConfig,
    dict: &Dictionary,
    features: &Array2<f64>,
    partition: Option<&GroupPartition>,
    gamma: f64,
) -> Result<Array2<f64>, AppError> {
    let codes = match config.mode {
        Mode::Scdl => {
            let partition = partition.expect("scdl coding needs a partition");
            code_groups(
                dict.array(),
                features,
                partition,
                &RegSchedule::new(config.sigma2)?,
                &config.learn.inner,
                config.solver,
            )?
        }
        Mode::Sdl => code_samples(
            dict.array(),
            features,
            gamma,
            config.nonneg,
            &config.learn.inner,
        )?,
        Mode::Cdl => code_samples(dict.array(), features, gamma, false, &config.learn.inner)?,
    };
    Ok(codes.to_dense())
}

pub fn pixel_indices(labels: &LabelMap, width: usize) -> Vec<usize> {
    labels
        .entries
        .iter()
        .map(|e| e.row as usize * width + e.col as usize)
        .collect()
}

pub fn label_vec(labels: &LabelMap) -> Vec<u32> {
    labels.entries.iter().map(|e| e.class_id).collect()
}

pub struct FittedClassifier {
    pub model: OvoSvmModel,
    pub chosen_c: f64,
}

/// Cross-validate C on the training codes and fit the one-vs-one model.
pub fn fit_classifier(
    config: &PipelineConfig,
    codes: &Array2<f64>,
    width: usize,
    train: &LabelMap,
    num_classes: u32,
    seed: u64,
) -> Result<FittedClassifier, AppError> {
    let svm_config = SvmConfig {
        seed,
        ..SvmConfig::default()
    };
    let feats = codes.select(Axis(1), &pixel_indices(train, width));
    let labels = label_vec(train);
    let chosen_c = cross_validate(
        feats.view(),
        &labels,
        num_classes,
        &config.c_grid,
        5,
        seed,
        &svm_config,
    )?;
    let model = train_ovo(feats.view(), &labels, num_classes, chosen_c, &svm_config)?;
    Ok(FittedClassifier { model, chosen_c })
}

pub fn evaluate_on(
    model: &OvoSvmModel,
    codes: &Array2<f64>,
    width: usize,
    test: &LabelMap,
) -> Result<EvalReport, AppError> {
    if test.is_empty() {
        return Err(AppError::Data(scdl_core::Error::EmptyTestSet));
    }
    let feats = codes.select(Axis(1), &pixel_indices(test, width));
    let preds = model.predict_batch(feats.view())?;
    Ok(evaluate(&preds, &label_vec(test), model.num_classes)?)
}

/// Fixed 16-color class palette (class id 1 maps to entry 0; ids beyond 16
/// wrap around). Unlabeled pixels in ground-truth maps render black.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

pub fn class_color(class_id: u32) -> [u8; 3] {
    PALETTE[((class_id - 1) as usize) % PALETTE.len()]
}

/// Write a binary PPM (P6) class map colored by the fixed palette.
pub fn write_class_map(
    path: &Path,
    predictions: &[u32],
    height: usize,
    width: usize,
) -> Result<(), AppError> {
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    for &class in predictions {
        bytes.extend_from_slice(&class_color(class));
    }
    std::fs::write(path, bytes).map_err(|e| AppError::Data(e.into()))?;
    Ok(())
}

/// Predictions CSV in the label-map format, one line per pixel.
pub fn write_predictions(
    path: &Path,
    predictions: &[u32],
    height: usize,
    width: usize,
) -> Result<(), AppError> {
    let mut out = String::from("row,col,class\n");
    for r in 0..height {
        for c in 0..width {
            out.push_str(&format!("{},{},{}\n", r, c, predictions[r * width + c]));
        }
    }
    std::fs::write(path, out).map_err(|e| AppError::Data(e.into()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Numerical(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| AppError::Data(e.into()))?;
    Ok(())
}
