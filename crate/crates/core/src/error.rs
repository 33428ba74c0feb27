use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{what} cap exceeded: {value} > {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degenerate marginal at site {site}: {value}")]
    Degenerate { site: usize, value: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

impl Error {
    /// Process exit status used by the experiment runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. } | Error::Invalid(_) | Error::Parse { .. } => 2,
            Error::CapExceeded { .. } => 3,
            Error::Degenerate { .. } | Error::Numerical(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
