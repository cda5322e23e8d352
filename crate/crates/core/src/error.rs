use thiserror::Error;

/// Errors raised by the estimator, policies, environment and runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("workload {x} is not below service rate {mu}; the queue is unstable")]
    UnstableQueue { x: f64, mu: f64 },

    #[error("round {round} of policy {policy}: {source}")]
    Episode {
        round: usize,
        policy: String,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
