//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by configuration, model construction, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("orthogonal pilots need tau >= K, got tau = {tau}, K = {k_users}")]
    PilotLength { tau: usize, k_users: usize },

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("inconsistent statistics: {0}")]
    InconsistentStats(String),

    #[error("receiver weight column {0} is not unit norm")]
    NotUnitNorm(usize),

    #[error("combining filter system is singular for user {0}")]
    SingularFilter(usize),

    #[error("power allocation failed: {0}")]
    PowerAllocation(String),

    #[error("active-set size {k_m} outside 1..={k_users}")]
    ActiveSetSize { k_m: usize, k_users: usize },

    #[error("{m_aps} APs with {k_m} slots each cannot cover {k_users} users")]
    CoverageInfeasible {
        m_aps: usize,
        k_m: usize,
        k_users: usize,
    },

    #[error("unknown parameter `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
