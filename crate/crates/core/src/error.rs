use thiserror::Error;

/// Errors raised by grid, model, symbol and solver operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("direction is not a unit vector (|omega| = {0})")]
    NonUnitDirection(f64),

    #[error("structural condition violated: {0}")]
    StructureViolation(String),

    #[error("a-priori bound exceeded at t = {time}: |D^2 u|_inf = {value:.6e} > {bound:.6e}")]
    BoundViolation { time: f64, value: f64, bound: f64 },

    #[error("fixed-point iteration stalled at t = {time} after {iterations} sweeps (relative change {change:.3e})")]
    PicardDivergence {
        time: f64,
        iterations: usize,
        change: f64,
    },

    #[error("quadrature did not converge: estimate {estimate:.6e}, relative change {change:.3e}")]
    Quadrature { estimate: f64, change: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
