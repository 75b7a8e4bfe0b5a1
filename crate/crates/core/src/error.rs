use thiserror::Error;

/// Errors raised by the calibration, coupling and classifier routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OvoError {
    #[error("invalid class pair ({0}, {1}): indices must differ")]
    InvalidPair(usize, usize),

    #[error("degenerate pair ({0}, {1}): p_i + p_j = 0")]
    DegeneratePair(usize, usize),

    #[error("class index {index} out of range for {k} classes")]
    ClassIndex { index: usize, k: usize },

    #[error("invalid class set: {0}")]
    InvalidClassSet(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid score matrix at ({row}, {col}): {reason}")]
    InvalidScores { row: usize, col: usize, reason: String },

    #[error("invalid calibration parameters: {0}")]
    InvalidParams(String),

    #[error("missing calibration for pair ({0}, {1})")]
    MissingCalibration(usize, usize),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("degenerate calibration fit for pair ({i}, {j}): {reason}")]
    DegenerateFit { i: usize, j: usize, reason: String },

    #[error("degenerate coupling system: {0}")]
    DegenerateCoupling(String),

    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),

    #[error("shape mismatch: expected dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("class {0} has no samples")]
    MissingClass(String),

    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("score record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl OvoError {
    /// True for failures of the numerical routines rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, OvoError::DegenerateFit { .. } | OvoError::DegenerateCoupling(_))
    }

    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        OvoError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for OvoError {
    fn from(e: std::io::Error) -> Self {
        OvoError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for OvoError {
    fn from(e: serde_json::Error) -> Self {
        OvoError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OvoError>;
