use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: String, value: f64, reason: String },

    #[error("Sinkhorn iteration did not converge after {sweeps} sweeps (max deviation {max_deviation:e})")]
    Convergence { sweeps: usize, max_deviation: f64 },

    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("row {row} is not a probability vector (sum {sum})")]
    Sampling { row: usize, sum: f64 },

    #[error("no grid point met the collapse criterion {criterion}")]
    NotFound { criterion: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
