//! The four subcommands: learn, classify, msi, bench.

use std::path::PathBuf;

use ndarray::{Array2, Axis};
use serde::Serialize;

use scdl_core::classify::{cross_validate_scores, train_ovo, EvalReport, OvoSvmModel, SvmConfig};
use scdl_core::data::{
    load_dictionary, save_codes, save_dictionary, save_labels, CodeMatrix, LabelMap,
};
use scdl_core::learn::{init_dictionary, learn, LearnConfig, LearnOutput, RegSchedule};
use scdl_core::msi::{apply_binner, code_msi, make_binner, BinCoverage, MsiCoding};

use crate::config::{Mode, PipelineConfig};
use crate::pipeline::{
    code_all_pixels, coding_model, contextual_partition, evaluate_on, feature_matrix,
    fit_classifier, label_vec, load_scene, pixel_indices, split, write_class_map,
    write_json, write_predictions, SceneData,
};
use crate::AppError;

fn ensure_out_dir(config: &PipelineConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&config.out).map_err(|e| AppError::Data(e.into()))
}

fn run_in_pool<T: Send>(
    threads: usize,
    body: impl FnOnce() -> Result<T, AppError> + Send,
) -> Result<T, AppError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Config(format!("threads: {e}")))?;
    pool.install(body)
}

/// Run the learning loop for the configured mode and return the dictionary,
/// codes for every pixel, and the report.
fn learn_pipeline(
    config: &PipelineConfig,
    data: &SceneData,
    features: &Array2<f64>,
    partition: Option<&scdl_core::GroupPartition>,
    train: &LabelMap,
    gamma: f64,
) -> Result<(LearnOutput, Array2<f64>), AppError> {
    let width = data.cube.width();
    let train_idx = pixel_indices(train, width);
    let train_features = features.select(Axis(1), &train_idx);
    let k = config.atoms.resolve(train.len());
    let init = init_dictionary(&train_features, k, config.seed)?;
    let model = coding_model(config, gamma)?;
    let output = match config.mode {
        // the joint-sparse model learns over the whole partitioned image
        Mode::Scdl => learn(features, &init, &model, partition, &config.learn)?,
        // the per-pixel models learn from the training samples only
        Mode::Sdl | Mode::Cdl => learn(&train_features, &init, &model, None, &config.learn)?,
    };
    let all_codes = match config.mode {
        Mode::Scdl => output.codes.to_dense(),
        Mode::Sdl | Mode::Cdl => {
            code_all_pixels(config, &output.dictionary, features, partition, gamma)?
        }
    };
    Ok((output, all_codes))
}

#[derive(Serialize)]
struct LearnSummary {
    mode: String,
    atoms: usize,
    train_samples: usize,
    iterations: usize,
    final_objective: f64,
    chosen_gamma: f64,
    seconds: f64,
}

pub fn cmd_learn(config: &PipelineConfig) -> Result<(), AppError> {
    ensure_out_dir(config)?;
    let started = std::time::Instant::now();
    let data = load_scene(config)?;
    let (train, test) = split(config, &data, config.seed)?;
    run_in_pool(config.threads, || {
        let features = feature_matrix(config, &data.cube)?;
        let partition = contextual_partition(config, &data.cube)?;
        let (output, all_codes) = learn_pipeline(
            config,
            &data,
            &features,
            partition.as_ref(),
            &train,
            config.gamma,
        )?;
        save_dictionary(&output.dictionary, &config.out.join("dictionary.json"))?;
        save_codes(
            &CodeMatrix::from_dense(&all_codes),
            &config.out.join("codes.json"),
        )?;
        save_labels(&train, &config.out.join("train.csv"))?;
        save_labels(&test, &config.out.join("test.csv"))?;
        let mut report_lines = String::new();
        for stats in &output.report.iterations {
            report_lines.push_str(
                &serde_json::to_string(stats)
                    .map_err(|e| AppError::Numerical(e.to_string()))?,
            );
            report_lines.push('\n');
        }
        std::fs::write(config.out.join("learn_report.jsonl"), report_lines)
            .map_err(|e| AppError::Data(e.into()))?;
        let summary = LearnSummary {
            mode: format!("{:?}", config.mode).to_lowercase(),
            atoms: output.dictionary.atoms(),
            train_samples: train.len(),
            iterations: output.report.iterations.len(),
            final_objective: output.report.final_objective,
            chosen_gamma: config.gamma,
            seconds: started.elapsed().as_secs_f64(),
        };
        write_json(&config.out.join("learn_summary.json"), &summary)?;
        println!(
            "learned {} atoms in {} iterations, final objective {:.6e} ({:.1}s)",
            summary.atoms, summary.iterations, summary.final_objective, summary.seconds
        );
        Ok(())
    })
}

#[derive(Serialize)]
struct ClassifyReport {
    mode: String,
    chosen_c: f64,
    chosen_gamma: f64,
    eval: EvalReport,
}

#[derive(Serialize)]
struct MetricSummary {
    runs: usize,
    oa_mean: f64,
    oa_std: f64,
    aa_mean: f64,
    aa_std: f64,
    kappa_mean: f64,
    kappa_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub struct ClassifyOptions {
    pub dictionary: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub repeats: u32,
}

pub fn cmd_classify(config: &PipelineConfig, options: &ClassifyOptions) -> Result<(), AppError> {
    ensure_out_dir(config)?;
    let data = load_scene(config)?;
    let dict_path = options
        .dictionary
        .clone()
        .unwrap_or_else(|| config.out.join("dictionary.json"));
    let dict = load_dictionary(&dict_path)?;
    let saved_model = match &options.model {
        Some(path) => Some(OvoSvmModel::load(path)?),
        None => None,
    };
    let repeats = options.repeats.max(1);
    run_in_pool(config.threads, || {
        let features = feature_matrix(config, &data.cube)?;
        let partition = contextual_partition(config, &data.cube)?;
        let width = data.cube.width();
        let num_classes = data.labels.num_classes;

        // gamma selection for the per-pixel modes when a grid is configured:
        // code the training pixels per candidate and keep the (gamma, C)
        // pair with the best mean fold OA
        let gamma = match (&config.gamma_grid, config.mode) {
            (Some(grid), Mode::Sdl | Mode::Cdl) => {
                let (train, _) = split(config, &data, config.seed)?;
                let train_idx = pixel_indices(&train, width);
                let train_labels = label_vec(&train);
                let svm_config = SvmConfig {
                    seed: config.seed,
                    ..SvmConfig::default()
                };
                let mut best = (f64::NEG_INFINITY, grid[0]);
                for &g in grid {
                    let train_features = features.select(Axis(1), &train_idx);
                    let codes =
                        code_all_pixels(config, &dict, &train_features, None, g)?;
                    let scores = cross_validate_scores(
                        codes.view(),
                        &train_labels,
                        num_classes,
                        &config.c_grid,
                        5,
                        config.seed,
                        &svm_config,
                    )?;
                    for &(_, score) in &scores {
                        if score > best.0 {
                            best = (score, g);
                        }
                    }
                }
                best.1
            }
            _ => config.gamma,
        };
        let codes = code_all_pixels(config, &dict, &features, partition.as_ref(), gamma)?;

        let mut oas = Vec::new();
        let mut aas = Vec::new();
        let mut kappas = Vec::new();
        for run in 0..repeats {
            let seed = config.seed + run as u64;
            let (train, test) = split(config, &data, seed)?;
            let (model, chosen_c) = match &saved_model {
                Some(m) => (m.clone(), m.classifiers.first().map(|p| p.svm.c).unwrap_or(0.0)),
                None => {
                    let fitted =
                        fit_classifier(config, &codes, width, &train, num_classes, seed)?;
                    (fitted.model, fitted.chosen_c)
                }
            };
            let eval = evaluate_on(&model, &codes, width, &test)?;
            oas.push(eval.oa);
            aas.push(eval.aa);
            kappas.push(eval.kappa);
            if run == 0 {
                let preds = model.predict_batch(codes.view())?;
                write_predictions(
                    &config.out.join("predictions.csv"),
                    &preds,
                    data.cube.height(),
                    width,
                )?;
                write_class_map(
                    &config.out.join("class_map.ppm"),
                    &preds,
                    data.cube.height(),
                    width,
                )?;
                if saved_model.is_none() {
                    model.save(&config.out.join("model.json"))?;
                }
                write_json(
                    &config.out.join("eval.json"),
                    &ClassifyReport {
                        mode: format!("{:?}", config.mode).to_lowercase(),
                        chosen_c,
                        chosen_gamma: gamma,
                        eval: eval.clone(),
                    },
                )?;
                println!(
                    "seed {seed}: OA {:.4}, AA {:.4}, kappa {:.4} (C = {chosen_c})",
                    eval.oa, eval.aa, eval.kappa
                );
            }
        }
        if repeats > 1 {
            let (oa_mean, oa_std) = mean_std(&oas);
            let (aa_mean, aa_std) = mean_std(&aas);
            let (kappa_mean, kappa_std) = mean_std(&kappas);
            let summary = MetricSummary {
                runs: repeats as usize,
                oa_mean,
                oa_std,
                aa_mean,
                aa_std,
                kappa_mean,
                kappa_std,
            };
            write_json(&config.out.join("eval_summary.json"), &summary)?;
            println!(
                "{} runs: OA {:.4} +/- {:.4}, AA {:.4} +/- {:.4}, kappa {:.4} +/- {:.4}",
                repeats, oa_mean, oa_std, aa_mean, aa_std, kappa_mean, kappa_std
            );
        }
        Ok(())
    })
}

pub struct MsiOptions {
    pub dictionary: Option<PathBuf>,
    pub bins: usize,
    pub reuse_c: bool,
}

#[derive(Serialize)]
struct MsiLevelReport {
    bins: Option<usize>,
    coverage: Option<String>,
    chosen_c: f64,
    eval: EvalReport,
}

#[derive(Serialize)]
struct MsiReport {
    hsi: MsiLevelReport,
    msi: MsiLevelReport,
    chsi: MsiLevelReport,
}

pub fn cmd_msi(config: &PipelineConfig, options: &MsiOptions) -> Result<(), AppError> {
    if config.mode == Mode::Cdl {
        return Err(AppError::Config(
            "mode: the msi experiment supports sdl and scdl only".into(),
        ));
    }
    ensure_out_dir(config)?;
    let data = load_scene(config)?;
    let dict_path = options
        .dictionary
        .clone()
        .unwrap_or_else(|| config.out.join("dictionary.json"));
    let dict = load_dictionary(&dict_path)?;
    run_in_pool(config.threads, || {
        let spectra = data.cube.to_spectra();
        let partition = contextual_partition(config, &data.cube)?;
        let width = data.cube.width();
        let num_classes = data.labels.num_classes;
        let (train, test) = split(config, &data, config.seed)?;

        let level = |codes: &Array2<f64>,
                         reuse: Option<f64>,
                         bins: Option<usize>,
                         coverage: Option<&str>|
         -> Result<MsiLevelReport, AppError> {
            let (model, chosen_c) = match reuse {
                Some(c) => {
                    let svm_config = SvmConfig {
                        seed: config.seed,
                        ..SvmConfig::default()
                    };
                    let feats = codes.select(Axis(1), &pixel_indices(&train, width));
                    (
                        train_ovo(feats.view(), &label_vec(&train), num_classes, c, &svm_config)?,
                        c,
                    )
                }
                None => {
                    let fitted = fit_classifier(
                        config,
                        codes,
                        width,
                        &train,
                        num_classes,
                        config.seed,
                    )?;
                    (fitted.model, fitted.chosen_c)
                }
            };
            let eval = evaluate_on(&model, codes, width, &test)?;
            Ok(MsiLevelReport {
                bins,
                coverage: coverage.map(str::to_string),
                chosen_c,
                eval,
            })
        };

        // full-resolution baseline
        let hsi_codes =
            code_all_pixels(config, &dict, &spectra, partition.as_ref(), config.gamma)?;
        let hsi = level(&hsi_codes, None, None, None)?;
        let reuse = options.reuse_c.then_some(hsi.chosen_c);

        let binned_level = |coverage: BinCoverage,
                                tag: &str|
         -> Result<MsiLevelReport, AppError> {
            let binner = make_binner(data.cube.bands(), options.bins, coverage)?;
            let z = apply_binner(&binner, &spectra)?;
            let coding = match config.mode {
                Mode::Sdl => MsiCoding::Lasso {
                    gamma: config.gamma,
                    nonneg: config.nonneg,
                },
                Mode::Scdl => MsiCoding::JointSparse {
                    partition: partition.as_ref().expect("scdl partition"),
                    schedule: RegSchedule::new(config.sigma2)?,
                    solver: config.solver,
                },
                Mode::Cdl => unreachable!(),
            };
            let codes = code_msi(&dict, &binner, &z, &coding, &config.learn.inner)?.to_dense();
            level(&codes, reuse, Some(options.bins), Some(tag))
        };
        let msi = binned_level(BinCoverage::LowerHalf, "lower_half")?;
        let chsi = binned_level(BinCoverage::Full, "full")?;
        println!(
            "OA: hsi {:.4}, msi {:.4}, coarse-hsi {:.4}",
            hsi.eval.oa, msi.eval.oa, chsi.eval.oa
        );
        write_json(&config.out.join("msi_eval.json"), &MsiReport { hsi, msi, chsi })?;
        Ok(())
    })
}

pub struct BenchOptions {
    pub iters: usize,
    pub thread_counts: Vec<usize>,
}

#[derive(Serialize)]
struct BenchRun {
    threads: usize,
    seconds_per_iteration: Vec<f64>,
    total_seconds: f64,
    speedup_vs_single: f64,
}

#[derive(Serialize)]
struct BenchReport {
    iterations: usize,
    runs: Vec<BenchRun>,
}

pub fn cmd_bench(config: &PipelineConfig, options: &BenchOptions) -> Result<(), AppError> {
    ensure_out_dir(config)?;
    let data = load_scene(config)?;
    let (train, _test) = split(config, &data, config.seed)?;
    let features = feature_matrix(config, &data.cube)?;
    let partition = contextual_partition(config, &data.cube)?;
    let bench_learn = LearnConfig {
        outer_iters: options.iters,
        outer_rel_tol: 0.0, // run the full budget
        inner: config.learn.inner,
    };
    let bench_config = PipelineConfig {
        learn: bench_learn,
        ..config.clone()
    };
    let mut runs = Vec::new();
    let mut single_total = None;
    for &threads in &options.thread_counts {
        let report = run_in_pool(threads, || {
            let (output, _codes) = learn_pipeline(
                &bench_config,
                &data,
                &features,
                partition.as_ref(),
                &train,
                bench_config.gamma,
            )?;
            Ok(output.report)
        })?;
        let seconds: Vec<f64> = report.iterations.iter().map(|s| s.seconds).collect();
        let total: f64 = seconds.iter().sum();
        if threads == 1 {
            single_total = Some(total);
        }
        let speedup = single_total.map(|s| s / total).unwrap_or(f64::NAN);
        println!(
            "threads {threads}: total {total:.2}s over {} iterations (speedup {speedup:.2})",
            seconds.len()
        );
        runs.push(BenchRun {
            threads,
            seconds_per_iteration: seconds,
            total_seconds: total,
            speedup_vs_single: speedup,
        });
    }
    write_json(
        &config.out.join("bench.json"),
        &BenchReport {
            iterations: options.iters,
            runs,
        },
    )?;
    Ok(())
}

