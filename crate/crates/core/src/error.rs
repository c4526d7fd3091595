use thiserror::Error;

/// Errors produced by the simulation, imaging, and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (bad count, range, or ratio).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A position fell outside the room, or a geometry constraint failed.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Array dimensions disagree with what an operation requires.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A metric is undefined for the given data (e.g. zero-energy column).
    #[error("metric error: {0}")]
    Metric(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    /// A file did not match the expected binary or JSON layout.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
