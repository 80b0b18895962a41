use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Every hypothesis on the grid has zero weight after an update.
    #[error("degenerate posterior: outcome impossible under every hypothesis")]
    DegeneratePosterior,

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty record")]
    EmptyRecord,

    #[error("invalid outcome {outcome}: {reason}")]
    InvalidOutcome { outcome: i64, reason: String },

    #[error("outcome source failed: {0}")]
    OutcomeSource(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
