use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("comparison model infeasible: {0}")]
    Infeasible(String),
    #[error("triggering condition already non-negative (Γ = {gamma:e}); bound is zero")]
    ImmediateTrigger { gamma: f64 },
    #[error("integration failed at t = {t:e}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
