//! Workload builders shared by the benchmarks.

use ndarray::{Array1, Array2};

use scdl_core::synthetic::{planted_joint_sparse, PlantedConfig, PlantedModel};

/// A planted joint-sparse workload sized like one mid-size image tile.
pub fn grouped_workload(groups: usize, group_size: usize) -> PlantedModel {
    planted_joint_sparse(&PlantedConfig {
        bands: 32,
        atoms: 64,
        groups,
        group_size,
        support: 3,
        noise_std: 0.05,
        seed: 17,
    })
    .expect("generate workload")
}

/// One dictionary/signal pair for single-problem solver benchmarks.
pub fn single_group(width: usize) -> (Array2<f64>, Array2<f64>) {
    let model = grouped_workload(1, width);
    (model.dictionary, model.signals)
}

/// A single signal vector for the Lasso benchmark.
pub fn single_signal() -> (Array2<f64>, Array1<f64>) {
    let model = grouped_workload(1, 1);
    let x = model.signals.column(0).to_owned();
    (model.dictionary, x)
}
