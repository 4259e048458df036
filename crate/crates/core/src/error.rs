use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("{rows}x{cols} matrix contains a non-finite entry")]
    NonFinite { rows: usize, cols: usize },

    #[error("{dim}x{dim} matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { dim: usize, asymmetry: f64 },

    #[error("{dim}x{dim} matrix is not positive definite")]
    NotPositiveDefinite { dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("invalid swarm parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate decoder for user {user}: interference-plus-noise covariance is singular")]
    DegenerateDecoder { user: usize },

    #[error(
        "closed-form BD rate is not valid here: user {user} leaks interference \
         (residual {residual:e}); score with the general weighted-sum-rate evaluator"
    )]
    BdInfeasible { user: usize, residual: f64 },

    #[error("particle {particle} failed at iteration {iteration}: {source}")]
    ParticleEvaluation {
        particle: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}
