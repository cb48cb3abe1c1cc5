use thiserror::Error;

use crate::cvxcore::SolveResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The target response `H_s p` vanishes, so every receiver sees zero sensing SINR.
    #[error("degenerate sensing: target response H_s p is zero")]
    DegenerateSensing,

    /// The initial beamformer cannot meet the sensing SINR requirement.
    #[error("sensing infeasible: achieved SINR {achieved:.4e} below required {required:.4e}")]
    InfeasibleSensing { achieved: f64, required: f64 },

    #[error("start point is not strictly feasible: constraint {index} has value {value:.3e}")]
    NeedsPhaseOne { index: usize, value: f64 },

    #[error("solver did not converge after {iterations} Newton steps")]
    ConvergenceFailure {
        iterations: usize,
        best: Box<SolveResult>,
    },

    #[error("{what} refused: {size} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("degenerate beampattern: response is zero on the whole grid")]
    DegeneratePattern,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
