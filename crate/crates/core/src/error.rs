use thiserror::Error;

/// Errors raised across the calibration pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("too few rows: {rows} rows cannot fill splits of sizes {sizes:?}")]
    TooFewRows { rows: usize, sizes: [usize; 3] },

    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),

    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),

    #[error("score `{score}` cannot consume a `{variant}` prediction")]
    VariantMismatch { score: &'static str, variant: &'static str },

    #[error("degenerate interval: width {0} below 1e-12")]
    DegenerateInterval(f64),

    #[error("predicted standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("flow fit did not reach target accuracy: lambda = {achieved} > {target}")]
    NafNotConverged { achieved: f64, target: f64 },

    #[error("bracket search failed for target {target} after {expansions} expansions")]
    BracketFailure { target: f64, expansions: usize },

    #[error("conformal interval is empty for confidence {0}")]
    EmptyInterval(f64),

    #[error("calibration rows overlap the base predictor's training rows ({overlap} shared rows from `{source_name}`)")]
    SplitProvenance { source_name: String, overlap: usize },

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;
