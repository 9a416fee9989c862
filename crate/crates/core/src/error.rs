use thiserror::Error;

/// Errors raised by the solvers.
///
/// Refusals are precondition failures (the question is not posed on the
/// given data); solver failures mean the question was posed but the
/// iteration did not deliver an answer.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("refused: {0}")]
    Refused(String),

    #[error("solver failure in {stage}: {reason}")]
    SolverFailure { stage: &'static str, reason: String },
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }

    pub(crate) fn refused(msg: impl Into<String>) -> Self {
        Self::Refused(msg.into())
    }

    pub(crate) fn failure(stage: &'static str, reason: impl Into<String>) -> Self {
        Self::SolverFailure {
            stage,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
