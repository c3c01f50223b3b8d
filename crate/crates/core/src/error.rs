use thiserror::Error;

pub type Result<T> = std::result::Result<T, PktError>;

#[derive(Debug, Error)]
pub enum PktError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("gaussian kernel width must be positive and finite, got {0}")]
    InvalidWidth(f64),

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate geometry: normalizer for conditioning sample {index} is {value:e}")]
    DegenerateNormalizer { index: usize, value: f64 },

    #[error("labels contain no same-class pair")]
    NoSameClassPairs,

    #[error("no query has a relevant database item ({skipped} skipped)")]
    NoScorableQueries { skipped: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
