use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown environment `{0}` (expected cartpole, mountaincar or pendulum)")]
    UnknownEnv(String),

    #[error("unknown sampler `{0}`")]
    UnknownSampler(String),

    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate support: {0} point(s) have a zero k-th neighbour distance")]
    DegenerateSupport(usize),

    #[error("not enough samples: need at least {needed}, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("kernel matrix is not positive definite even with noise floor {0:e}")]
    NotPositiveDefinite(f64),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownEnv(_)
                | Error::UnknownSampler(_)
                | Error::UnknownFamily(_)
                | Error::InvalidArgument(_)
                | Error::Config(_)
        )
    }
}
