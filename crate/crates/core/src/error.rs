use thiserror::Error;

/// Everything that can go wrong while building models, solving for oracle
/// quantities, or running learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid feature map: {0}")]
    InvalidFeatures(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "behavior policy does not cover action {action} in state {state} (probability {prob:e})"
    )]
    CoverageViolation {
        state: usize,
        action: usize,
        prob: f64,
    },

    #[error("chain not irreducible/aperiodic: {0}")]
    ChainNotErgodic(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("feature matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("learner diverged at step {step}: {what}")]
    Divergence { step: u64, what: String },

    #[error("invariant violated at step {step}: {what}")]
    InvariantViolation { step: u64, what: String },

    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
