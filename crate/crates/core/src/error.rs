use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unichain assumption violated: limits from states {first} and {second} differ by {distance:e} (L1)")]
    UnichainViolation {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),

    #[error("mixing time exceeds cap of {0} steps")]
    MixingCapExceeded(u64),

    #[error("invalid action distribution at step {step}: {reason}")]
    InvalidDistribution { step: usize, reason: String },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("out-of-order record: {0}")]
    OutOfOrder(String),

    #[error("pair (state {state}, action {action}) inside the known set has no samples")]
    UnvisitedPair { state: usize, action: usize },

    #[error("state {0} is not in the known set")]
    NotKnown(usize),

    #[error("known set is empty")]
    EmptyKnownSet,

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("neither an exploitation nor an exploration witness exists at state {0}")]
    NoWitness(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
