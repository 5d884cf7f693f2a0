use thiserror::Error;

/// Errors raised anywhere in the optimization stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance not positive definite after jitter ladder {attempted:?}")]
    NotPositiveDefinite { attempted: Vec<f64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("tanks-in-series fit failed: {0}")]
    Fit(String),

    #[error("evaluation failed: {message}")]
    Evaluation {
        message: String,
        /// Cost already paid before the failure, if known.
        cost: Option<f64>,
    },

    #[error("protocol error: {message} (captured output: {output:?})")]
    Protocol {
        message: String,
        output: String,
        cost: Option<f64>,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("campaign paused after {0} records")]
    Interrupted(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn evaluation(message: impl Into<String>, cost: Option<f64>) -> Self {
        Error::Evaluation {
            message: message.into(),
            cost,
        }
    }

    /// Cost consumed by a failed evaluation, when the evaluator reported one.
    pub fn paid_cost(&self) -> Option<f64> {
        match self {
            Error::Evaluation { cost, .. } | Error::Protocol { cost, .. } => *cost,
            _ => None,
        }
    }
}
