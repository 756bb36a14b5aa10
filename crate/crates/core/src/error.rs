use thiserror::Error;

use crate::gp::GpParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty training set")]
    EmptyTraining,

    #[error("rank-deficient design matrix; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("point outside coverage of covariate source `{source_name}`")]
    OutOfCoverage { source_name: String },

    #[error("insufficient sensors: {0}")]
    InsufficientSensors(String),

    #[error("optimizer did not converge: {message}")]
    NoConvergence {
        message: String,
        best: Option<Box<GpParams>>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("matrix is not positive definite even after jitter")]
    Singular,

    #[error("scene too large for dense simulation: {nodes} grid nodes (limit {limit}); reduce grid size or duration")]
    SceneTooLarge { nodes: usize, limit: usize },

    #[error("unknown model `{name}`; registered models: {}", registered.join(", "))]
    UnknownModel {
        name: String,
        registered: Vec<String>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
