use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape underflow at level {level}: size {size} ({detail})")]
    ShapeUnderflow {
        level: usize,
        size: i64,
        detail: String,
    },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-uniform period along {axis}: spacing deviates by {deviation:e}")]
    NonUniformPeriod { axis: char, deviation: f64 },

    #[error("unsupported grid mode: {0}")]
    UnsupportedMode(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("invalid noise policy: {0}")]
    InvalidPolicy(String),

    #[error("seam warning: {0}")]
    SeamWarning(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("projection diverged at step {step}: loss {loss:e} exceeds 10x initial {initial:e}")]
    Diverged { step: usize, loss: f64, initial: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
