use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("profile is zero everywhere, support is empty")]
    EmptySupport,
    #[error("range {range_m} m lies outside the profile grid [{min_m}, {max_m}] m")]
    OutOfGrid { range_m: f64, min_m: f64, max_m: f64 },
    #[error("no signal: intensities sum to zero")]
    NoSignal,
    #[error("least-squares fit failed: {0}")]
    FitFailure(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("prediction {value} at pixel {index} is not positive")]
    InvalidPrediction { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("unsupported feature: {0}")]
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
