use thiserror::Error;

use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum WedError {
    #[error("input error: {0}")]
    Input(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("solver error: {message}")]
    Solver {
        message: String,
        /// Best iterate reached before giving up, when one exists.
        best: Option<Box<Trajectory>>,
    },
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl WedError {
    pub(crate) fn solver(message: impl Into<String>) -> Self {
        WedError::Solver {
            message: message.into(),
            best: None,
        }
    }

    pub(crate) fn solver_with(message: impl Into<String>, best: Trajectory) -> Self {
        WedError::Solver {
            message: message.into(),
            best: Some(Box::new(best)),
        }
    }
}

pub type Result<T> = std::result::Result<T, WedError>;
