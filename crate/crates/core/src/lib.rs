//! Spatial-aware dictionary learning for hyperspectral image classification.
//!
//! The library learns a dictionary over image spectra under a joint-sparse
//! (l2/l1) regularizer applied to non-overlapping contextual pixel groups,
//! encodes pixels as sparse coefficient vectors, and classifies the codes
//! with a one-vs-one linear SVM. The spectral-only (per-pixel Lasso) and
//! contextual-moment baselines, and coding of simulated multispectral
//! measurements against a binned dictionary, share the same machinery.
//!
//! Modules:
//! - [`data`]: cubes, label maps, dictionaries, sparse code matrices, and
//!   their bit-exact file formats.
//! - [`context`]: patch partitions and window-moment features.
//! - [`solvers`]: Lasso coordinate descent, regularized M-FOCUSS, and
//!   row-wise BCD for the joint-sparse problem.
//! - [`learn`]: the alternating dictionary-learning loop and the group-size
//!   regularization schedule.
//! - [`classify`]: linear SVM training, one-vs-one prediction, OA/AA/kappa.
//! - [`msi`]: band binning and coding at multispectral resolution.
//! - [`synthetic`]: deterministic generators for tests and benchmarks.

pub mod classify;
pub mod context;
pub mod data;
pub mod error;
pub mod learn;
pub mod msi;
pub mod solvers;
pub mod synthetic;

pub use classify::{
    cross_validate, evaluate, train_binary, train_ovo, BinarySvm, EvalReport, OvoSvmModel,
    SvmConfig,
};
pub use context::{
    partition_into_patches, window_moments, ContextFeatures, GroupPartition, MomentOrder,
};
pub use data::{
    load_codes, load_cube, load_dictionary, load_labels, save_codes, save_cube,
    save_dictionary, save_labels, split_labels, CodeEntry, CodeMatrix, Dictionary, HsiCube,
    LabelEntry, LabelMap,
};
pub use error::{Error, Result};
pub use learn::{
    compute_gamma, init_dictionary, learn, update_dictionary, CodingModel, IterationStats,
    LearnConfig, LearnOutput, LearnReport, RegSchedule,
};
pub use msi::{apply_binner, code_msi, make_binner, BandBinner, BinCoverage, MsiCoding};
pub use solvers::{
    code_groups, code_samples, lasso_cd, mfocuss, mmv_bcd, LassoProblem, MmvProblem,
    MmvSolver, SolverConfig,
};
