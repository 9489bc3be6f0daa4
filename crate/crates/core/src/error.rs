use std::fmt;

use thiserror::Error;

/// Standing assumptions a scenario must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Globally Lipschitz partial gradients.
    LipschitzGradient,
    /// Strongly monotone pseudo-gradient with constant omega > 0.
    StrongMonotonicity,
    /// Strongly connected communication digraph.
    StrongConnectivity,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::LipschitzGradient => write!(f, "Assumption 1 (Lipschitz gradients)"),
            Assumption::StrongMonotonicity => {
                write!(
                    f,
                    "Assumption 2 (strongly monotone pseudo-gradient, omega > 0)"
                )
            }
            Assumption::StrongConnectivity => {
                write!(
                    f,
                    "Assumption 3 (the directed graph G is strongly connected)"
                )
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} players")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{assumption} violated: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
    },

    #[error("game Jacobian is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("gradient play did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(
        "controllability matrix of the canonical form is singular for m = {order}, theta = {theta} (condition {condition:e})"
    )]
    SingularTransformation {
        order: usize,
        theta: f64,
        condition: f64,
    },

    #[error("adaptive gains must satisfy c_ij(0) > 0; found c[{i}][{j}] = {value}")]
    NonPositiveGain { i: usize, j: usize, value: f64 },

    #[error("mode {mode} cannot drive player {player} of order {order}")]
    ModeMismatch {
        mode: String,
        player: usize,
        order: usize,
    },

    #[error("non-finite value in state component {component} at t = {time}")]
    NonFinite { time: f64, component: usize },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
