use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Channels that must be synchronous disagree on length or sampling metadata.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A configuration or model parameter is outside its valid domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An index, interval or cycle falls outside the available samples.
    #[error("range error: {0}")]
    Range(String),

    /// Operations were invoked out of order (e.g. identification without a trigger).
    #[error("sequencing error: {0}")]
    Sequencing(String),
}

pub type Result<T> = std::result::Result<T, Error>;
