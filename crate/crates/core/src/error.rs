use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("path supplies {available} increments at level {level}, {required} required")]
    InsufficientIncrements {
        level: usize,
        available: usize,
        required: usize,
    },

    #[error("reference path {path} diverged at step {step}")]
    ReferenceDiverged { path: u64, step: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
