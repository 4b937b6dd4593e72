use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric failure at step {step}: {msg}")]
    Numeric { step: usize, msg: String },

    #[error("singular innovation covariance at step {step}: {msg}")]
    Singular { step: usize, msg: String },

    #[error("training diverged at step {step} (inner iteration {iteration}): {msg}")]
    Training {
        step: usize,
        iteration: usize,
        msg: String,
    },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("malformed artifact {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Artifact { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
