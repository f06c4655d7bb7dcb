use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("soft threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("finite differences: loss is not deterministic (parameter {param}, element {index})")]
    NonDeterministic { param: usize, index: usize },
    #[error("finite differences: step must be positive, got {0}")]
    BadStep(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: row {row}: unknown region id `{id}`")]
    UnknownRegion { file: String, row: usize, id: String },
    #[error("{file}: row {row}: negative count {value}")]
    NegativeCount { file: String, row: usize, value: f64 },
    #[error("{file}: row {row}: bad value `{value}` in column `{column}`")]
    BadValue { file: String, row: usize, column: String, value: String },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: duplicate region id `{id}` at row {row}")]
    DuplicateRegion { file: String, row: usize, id: String },
    #[error("{file}: no row for region `{id}`")]
    MissingRegionRow { file: String, id: String },
    #[error("{file}: no rows")]
    EmptyFile { file: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch} ({component})")]
    NonFiniteLoss { epoch: usize, component: &'static str },
    #[error("loss component {0} is NaN")]
    NanComponent(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
