use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("formula: syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("formula: {0}")]
    Formula(String),

    #[error("data: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sparse: matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("pls: fixed-effects rank deficiency or PLS failure (X'WX - R_ZX'R_ZX is not positive definite)")]
    RankDeficient,

    #[error("pls: theta[{index}] = {value} violates its lower bound {lower}")]
    Bounds { index: usize, value: f64, lower: f64 },

    #[error("pls: {0}")]
    Pls(String),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error("profile: {0}")]
    Profile(String),

    #[error("inference: {0}")]
    Inference(String),
}
