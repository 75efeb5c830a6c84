use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("row {row} is degenerate (squared norm {norm_sq:e})")]
    DegenerateRow { row: usize, norm_sq: f64 },

    #[error("input gradient is zero; attack direction undefined")]
    DegenerateGradient,

    #[error("no gradient for trainable parameter {0}")]
    MissingGradient(String),

    #[error("optimizer state does not match parameter {0}")]
    OptimizerMismatch(String),

    #[error("{phase} diverged at step {step} (loss {loss})")]
    Diverged {
        phase: &'static str,
        step: usize,
        loss: f64,
    },

    #[error("network {0} must be frozen for this phase")]
    NotFrozen(String),

    #[error("{path}: bad IDX magic, expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated IDX file ({reason})")]
    Truncated { path: PathBuf, reason: String },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("split {train}+{test} exceeds dataset size {available}")]
    InvalidSplit {
        train: usize,
        test: usize,
        available: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("missing checkpoint {0}; run the corresponding train-* command first")]
    MissingCheckpoint(PathBuf),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
