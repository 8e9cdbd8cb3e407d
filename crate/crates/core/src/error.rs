use thiserror::Error;

use crate::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("invalid space grid: {0}")]
    InvalidSpaceGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shift {h} is not a multiple of dt = {dt}; nearest admissible shifts are {lower} and {upper}")]
    ShiftNotAligned { h: f64, dt: f64, lower: f64, upper: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NotConverged {
        iterations: usize,
        estimate: f64,
        last_iterate: Vec<C64>,
    },

    #[error("Hardy symbol needs radius r > 1/(2ν) = {min}, got r = {r}")]
    HardyRadius { r: f64, min: f64 },

    #[error("Hardy symbol has a pole on the discrete spectrum")]
    HardyPole,

    #[error("singular step matrix at step {step} (minimum pivot {min_pivot:e}); the positivity condition is likely violated")]
    SingularStep { step: usize, min_pivot: f64 },

    #[error("operator is not causal: {0}")]
    NotCausal(String),

    #[error("adjoint not available: {0}")]
    NoAdjoint(String),

    #[error("Neumann series does not contract: q = {q:.4} >= 1; increase nu")]
    NoContraction { q: f64 },

    #[error("grid alignment: {0}")]
    Alignment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),
}
