use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown environment `{0}` (expected CartPole-v1, Acrobot-v1 or MountainCar-v0)")]
    UnknownEnv(String),

    #[error("action {action} out of range for an environment with {n_actions} actions")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("episode has ended; call reset before stepping again")]
    EpisodeEnded,

    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("RBV fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("rollout buffer is empty")]
    EmptyBuffer,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed parameter file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 2,
            Error::Io(_) | Error::Csv(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
