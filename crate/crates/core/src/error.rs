use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("demands not balanced: sum {sum} exceeds tolerance {tol}")]
    Unbalanced { sum: f64, tol: f64 },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{stage} failed: {msg}")]
    Stage { stage: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
