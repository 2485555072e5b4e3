use crate::parse::ParseError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("fragment: {0}")]
    Fragment(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("undecidable task: {0}")]
    Undecidable(String),
    #[error("resource cap exceeded: {0}")]
    Cap(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

impl Error {
    /// Short machine-readable code used in JSON reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Fragment(_) => "fragment",
            Error::Unsupported(_) => "unsupported",
            Error::Undecidable(_) => "undecidable",
            Error::Cap(_) => "cap",
            Error::Invalid(_) => "invalid",
            Error::SelfCheck(_) => "self_check",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
