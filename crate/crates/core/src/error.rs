use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} lies outside the distribution support [0, {upper}]")]
    OutOfSupport { value: f64, upper: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("moment fit diverged (shape estimate {xi} exceeds the stable range)")]
    FitDiverged { xi: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("batch of {len} examples is too small (need at least {min})")]
    BatchTooSmall { len: usize, min: usize },
    #[error("all labels are identical")]
    DegenerateLabels,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("series of length {len} is too short (need more than {needed})")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("history of length {len} is shorter than the model order {order}")]
    HistoryTooShort { len: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("empty sample")]
    EmptySample,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("timestamps are not strictly increasing in series {series} at row {row}")]
    NonMonotoneTimestamps { series: String, row: usize },
    #[error("invalid split boundary: {0}")]
    InvalidBoundary(String),
    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
