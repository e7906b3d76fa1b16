use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("target not reachable: least-squares residual {residual:e} (|y_f| = {target_norm:e})")]
    Unreachable { residual: f64, target_norm: f64 },
    #[error("network is not target controllable: {0}")]
    NotTargetControllable(String),
    #[error("{what} has rank {rank}, need {required}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        required: usize,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
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
