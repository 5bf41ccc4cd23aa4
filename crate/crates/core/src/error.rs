use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("infeasible PA spacing: (M-1)*min_spacing = {needed} m exceeds region length {length} m")]
    SpacingInfeasible { needed: f64, length: f64 },
    #[error("zero distance between {0}")]
    ZeroDistance(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ill-conditioned channel matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("infeasible solution: {0}")]
    Infeasible(String),
    #[error("{0} needs a trained model")]
    MissingModel(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged { epoch: usize, step: usize, reason: String },
    #[error("search budget exceeded: {evaluations} evaluations needed, limit {limit}")]
    BudgetExceeded { evaluations: u128, limit: u128 },
    #[error("unsupported document: {0}")]
    Format(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
