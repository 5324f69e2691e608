use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("randomized policy requires a z value in [0, 1]")]
    MissingRandomization,

    #[error("z = {0} is outside [0, 1]")]
    InvalidRandomization(f64),

    #[error("no cost defined for stage {0}: schedule has no tail")]
    ScheduleExhausted(usize),

    #[error("model has no per-stage cost schedule")]
    MissingSchedule,

    #[error("stage cost {value} outside [0, {bound}]")]
    CostOutOfRange { value: f64, bound: f64 },

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("policy must be deterministic for this operation")]
    NotDeterministic,

    #[error("drift exceeds bound {bound} at x = {x:?}, a = {a:?} (|F| = {value})")]
    DriftUnbounded {
        bound: f64,
        x: Vec<f64>,
        a: Vec<f64>,
        value: f64,
    },

    #[error("grid mismatch between binned measures")]
    GridMismatch,

    #[error("missing constant(s): {0}")]
    MissingConstant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
