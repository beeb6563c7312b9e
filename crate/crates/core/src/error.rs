use thiserror::Error;

/// Errors shared by the game, estimator and learning layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("model conditioned on altruist state {model} but the state has {state:?}")]
    ConditioningMismatch { model: u32, state: Option<u32> },
    #[error("invalid environment state: {0}")]
    InvalidState(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
