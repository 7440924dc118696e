use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("undefined attribution ratio for `{dimension}`: {diagnostic}")]
    UndefinedRatio { dimension: String, diagnostic: String },

    #[error("training fault in member {member}, epoch {epoch}: {source}")]
    Training {
        member: usize,
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for faults raised while fitting a network, including those wrapped
    /// with ensemble context.
    pub fn is_training_fault(&self) -> bool {
        matches!(self, Error::NonFiniteGradient { .. } | Error::Training { .. })
    }
}
