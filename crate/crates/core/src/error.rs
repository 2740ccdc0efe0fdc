use thiserror::Error;

/// Errors produced anywhere in the DSPCA pipeline.
#[derive(Debug, Error)]
pub enum DspcaError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate index: all index values equal {0}")]
    DegenerateIndex(f64),

    #[error("split error: {0}")]
    Split(String),

    #[error("bandwidth underflow: kernel weights vanish at u = {u} with h = {h}")]
    BandwidthUnderflow { u: f64, h: f64 },

    #[error("leave-one-out weights underflow for class {class} at h = {h} (observations {indices:?})")]
    LoocvUnderflow {
        class: u8,
        h: f64,
        indices: Vec<usize>,
    },

    #[error("bandwidth selection failed: {0}")]
    Selection(String),

    #[error("rank deficiency: requested {requested} eigenvectors but only {usable} are usable")]
    RankDeficient { requested: usize, usable: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("basis is not orthonormal (Gram deviation {0:e})")]
    NonOrthonormal(f64),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("prediction failed for every query; first error at query {index}: {message}")]
    Prediction { index: usize, message: String },

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<csv::Error> for DspcaError {
    fn from(e: csv::Error) -> Self {
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DspcaError::Io(io),
            csv::ErrorKind::UnequalLengths {
                pos,
                expected_len,
                len,
            } => DspcaError::Format(format!(
                "ragged row{}: expected {expected_len} fields, found {len}",
                pos.map(|p| format!(" {}", p.record())).unwrap_or_default()
            )),
            _ => DspcaError::Format(message),
        }
    }
}

/// Coarse classification used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Usage or input problems (bad files, bad flags, malformed data).
    Input,
    /// Shape disagreement between inputs.
    Shape,
    /// Numerical failure inside the estimators.
    Numerical,
}

impl DspcaError {
    pub fn class(&self) -> ErrorClass {
        use DspcaError::*;
        match self {
            Io(_) | Parse { .. } | Schema(_) | Format(_) | InvalidArgument(_) | Split(_)
            | Json(_) | DegenerateIndex(_) => ErrorClass::Input,
            DimensionMismatch { .. } => ErrorClass::Shape,
            _ => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, DspcaError>;
