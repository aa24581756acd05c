use thiserror::Error;

/// Errors raised by the attribution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feature index {index} out of range for {n} features")]
    FeatureOutOfRange { index: usize, n: usize },

    #[error("{n} features exceeds the coalition width of {limit}")]
    TooManyFeatures { n: usize, limit: usize },

    #[error("exact enumeration is limited to {limit} features, got {n}")]
    ArityTooLarge { n: usize, limit: usize },

    #[error("feature {feature} is already a member of the coalition")]
    FeatureInCoalition { feature: usize },

    #[error("aggregation weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("attributions disagree on feature count ({expected} vs {found})")]
    ArityMismatch { expected: usize, found: usize },

    #[error("observation {0} has no occupancy mass under the policy")]
    UnsupportedObservation(String),

    #[error("policy does not terminate with probability one from state {state}")]
    ImproperPolicy { state: usize },

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("action {action} is not legal in state {state}")]
    IllegalAction { state: usize, action: usize },

    #[error("state {0} is terminal")]
    TerminalState(usize),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
