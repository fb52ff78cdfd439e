use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] hifid_core::Error),

    /// A model parameter is outside its valid domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The corpus manifest does not follow the expected schema.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Numerical integration diverged.
    #[error("integration diverged: {0}")]
    Diverged(String),
}

impl SimError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        SimError::Parameter(msg.into())
    }
}

pub type SimResult<T> = Result<T, SimError>;
