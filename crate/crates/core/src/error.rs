use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP:\n{0}")]
    InvalidMdp(ValidationReport),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("policy is on the boundary of the simplex: pi({action}|{state}) = {value}")]
    BoundaryPolicy { state: usize, action: usize, value: f64 },

    #[error("reward {reward} is nonzero on recurrent state {state}; total reward is unbounded")]
    InfiniteValue { state: usize, reward: f64 },

    #[error("linear system I - T is singular (spectral radius of T not below 1)")]
    Singular,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("enumeration of {count} deterministic policies exceeds cap {cap}")]
    EnumerationCap { count: f64, cap: u64 },

    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("monotone improvement violated at iteration {iter}: V_mu dropped by {drop:e}")]
    NonMonotone { iter: usize, drop: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
