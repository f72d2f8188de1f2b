use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid width {0}: must be in 1..=64")]
    InvalidWidth(u32),

    #[error("value {value:#x} does not fit in {width} bits")]
    ValueTooWide { width: u32, value: u64 },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: u32, got: u32 },

    #[error("invalid feedback spec: {0}")]
    InvalidSpec(String),

    #[error("width {0} is too large for exhaustive period walks (max 29)")]
    WidthTooLarge(u32),

    #[error("no maximum-length feedback found in {trials} trials")]
    TrialsExhausted {
        trials: u64,
        /// Longest orbit seen during the search, if any candidate was walked.
        best: Option<(crate::fsr::FeedbackSpec, u64)>,
    },

    #[error("PRNG seed leaves the {0} register all-zero")]
    DegenerateSeed(&'static str),

    #[error("PRNG seed rejected after {0} re-draws")]
    SeedRejected(u32),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("no unstable challenge found in {0} trials")]
    NotFound(u64),

    #[error("chunk size {0} does not divide 56")]
    ChunkMismatch(u32),

    #[error("training diverged at epoch {0}: loss is not finite")]
    DivergedTraining(usize),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
