use thiserror::Error;

/// Errors produced by the grid, scheme, model and reference modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbdfError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value {value} at node ({i}, {j}) in {context}")]
    NonFinite {
        context: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("unsupported scheme order {0}; expected 1..=4")]
    InvalidOrder(usize),

    #[error("expected {expected} history levels, got {got}")]
    LevelCount { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model `{model}` failed registration check: {reason}")]
    ModelCheck { model: String, reason: String },

    #[error(
        "fixed-point iteration stalled after {iters} iterations \
         (last increment {last_increment:e}, tolerance {tolerance:e}, rho {rho})"
    )]
    NotConverged {
        iters: usize,
        last_increment: f64,
        tolerance: f64,
        rho: f64,
    },

    #[error("dense operator needs {unknowns} unknowns, cap is {cap}")]
    OperatorTooLarge { unknowns: usize, cap: usize },

    #[error("newton iteration failed after {iters} iterations (residual {residual:e})")]
    NewtonFailed { iters: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SbdfError>;
