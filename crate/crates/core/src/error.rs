use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("evaluation on the singular set: {0}")]
    Singularity(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Argument(msg.into()))
}
