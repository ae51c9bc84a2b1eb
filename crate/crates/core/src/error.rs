//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by data loading, solvers, and classification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("header parse failed: {0}")]
    HeaderParse(String),
    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("parse error at line {0}: {1}")]
    ParseError(usize, String),
    #[error("label out of bounds at line {0}")]
    OutOfBounds(usize),
    #[error("duplicate coordinate at line {0}")]
    DuplicateCoordinate(usize),
    #[error("class {0} has too few samples")]
    ClassTooSmall(u32),
    #[error("index out of range in codes record {0}")]
    IndexOutOfRange(usize),
    #[error("patch width must be at least 1")]
    InvalidPatchWidth,
    #[error("window width must be odd, got {0}")]
    EvenWindow(usize),
    #[error("centers list is empty")]
    EmptyCenters,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("initial estimate row {0} has zero norm")]
    ZeroInitRow(usize),
    #[error("dictionary atom {0} has zero norm")]
    ZeroAtom(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough samples: requested {requested}, available {available}")]
    NotEnoughSamples { requested: usize, available: usize },
    #[error("all candidate samples are zero vectors")]
    AllZeroSamples,
    #[error("single class: {0}")]
    SingleClass(String),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid bin count: {bins} bins over {covered} covered bands")]
    InvalidBinCount { bins: usize, covered: usize },
    #[error("bin range [{start}, {end}) exceeds {bands} bands")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        bands: usize,
    },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
