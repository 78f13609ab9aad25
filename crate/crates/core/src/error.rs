use thiserror::Error;

/// Errors produced by clocks, estimators, simulations and trace I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or mismatched clock widths.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain of an operation (empty slice, l > q, bad range).
    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative evaluation failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A clock counter would exceed `u64::MAX`.
    #[error("counter overflow at index {index}")]
    Overflow { index: usize },

    /// Malformed trace or curve file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code used by the command-line runner.
    ///
    /// Configuration, domain and parse failures map to 2, numeric failures
    /// (including counter overflow) to 3, and I/O failures to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Parse { .. } => 2,
            Error::Numeric(_) | Error::Overflow { .. } => 3,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
