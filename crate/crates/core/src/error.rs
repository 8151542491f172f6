use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate payoff: average payoff {0:e} is below the consistency floor")]
    DegeneratePayoff(f64),
    #[error("insufficient correspondences: need at least 3, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("no non-collinear correspondence triple available")]
    TooDegenerate,
    #[error("missing nearest-neighbor similarity ratio for correspondence {0}")]
    MissingScores(u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
