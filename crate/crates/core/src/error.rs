use thiserror::Error;

/// Errors produced by the convolution, streaming, training and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("window underflow: layer needs {needed} frames, got {got}")]
    WindowUnderflow { needed: usize, got: usize },

    #[error("stale cache: engine primed with weights version {engine}, current version is {current}; reset required")]
    StaleCache { engine: u64, current: u64 },

    #[error("infeasible stack: n={n}, t={t}, w={w} leaves no frame in the deepest layer")]
    InfeasibleStack { n: usize, t: usize, w: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
