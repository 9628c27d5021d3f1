//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced while building or differentiating a tape.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: expects rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("backward target must be a scalar (shape [1]), got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("node id {0} is not on this tape")]
    UnknownNode(usize),
    #[error("non-finite value in {context} at component {index}")]
    NonFinite { context: String, index: usize },
}

/// Errors from network construction and parameter handling.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("parameter set for '{tag}' missing entry '{name}'")]
    MissingParam { tag: String, name: String },
    #[error("parameter '{name}': expected shape {expected:?}, got {got:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("architecture tag mismatch: expected '{expected}', file holds '{got}'")]
    TagMismatch { expected: String, got: String },
    #[error("input spatial size {h}x{w} unsupported: {why}")]
    BadInput { h: usize, w: usize, why: String },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Errors from the weights/corpus container format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes (expected WVGF)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid field {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
    #[error("metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from loss assembly.
#[derive(Debug, Error)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss kind {kind} requires component '{component}'")]
    MissingComponent { kind: String, component: &'static str },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient for parameter '{0}'; update aborted")]
    NonFiniteGrad(String),
    #[error("gradient list does not align with parameters: {0}")]
    GradMismatch(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("loss kind {0} requires a feature extractor")]
    MissingExtractor(String),
    #[error("generator loss became non-finite at epoch {epoch}; last good checkpoint retained")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors from data preparation.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("patch side {patch} exceeds image side {image}")]
    PatchTooLarge { patch: usize, image: usize },
    #[error("air threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("normalization window: hu_max {hu_max} must exceed hu_min {hu_min}")]
    BadWindow { hu_min: f64, hu_max: f64 },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors from metric computation.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch between candidate {got:?} and reference {expected:?}{method}")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
        method: String,
    },
    #[error("image {h}x{w} smaller than SSIM window {window}")]
    TooSmall { h: usize, w: usize, window: usize },
    #[error("ROI {label} ({row},{col})+{height}x{width} outside image {h}x{w}")]
    RoiOutside {
        label: String,
        row: usize,
        col: usize,
        height: usize,
        width: usize,
        h: usize,
        w: usize,
    },
}
