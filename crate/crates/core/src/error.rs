use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("cannot decode action: {0}")]
    Decode(String),

    #[error("map validation failed: {0}")]
    MapValidation(String),

    #[error("attribute sampling exhausted after {draws} draws for item {item}")]
    ExhaustedSampling { item: usize, draws: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("observation layout mismatch: expected width {expected}, got {actual}")]
    LayoutMismatch { expected: usize, actual: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("episode is degenerate: every item starts delivered")]
    DegenerateEpisode,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported schema {found:?}, expected {expected:?}")]
    SchemaVersion { expected: String, found: String },

    #[error("state width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("replay diverged at step {step}: {detail}")]
    ReplayDivergence { step: usize, detail: String },

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("invalid policy spec: {0}")]
    PolicySpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
