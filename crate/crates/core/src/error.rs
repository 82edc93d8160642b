use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input file, reported with the offending 1-based line.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("environment: {0}")]
    Environment(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable short tag used by the CLI's machine-parseable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::Environment(_) => "environment",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Oracle(e) => e.kind(),
        }
    }
}

/// Failures of the remote preference judge.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("network failure: {0}")]
    Network(String),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("retries exhausted after {attempts} attempts; last error: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<OracleError>,
    },

    #[error("malformed endpoint response: {0}")]
    Decode(String),

    #[error("missing configuration: {0}")]
    Config(String),

    #[error("no recorded response for prompt hash {0}")]
    ReplayMiss(String),
}

impl OracleError {
    pub fn kind(&self) -> &'static str {
        match self {
            OracleError::Network(_) => "oracle_network",
            OracleError::Timeout(_) => "oracle_timeout",
            OracleError::Status { .. } => "oracle_status",
            OracleError::RetriesExhausted { .. } => "oracle_retries_exhausted",
            OracleError::Decode(_) => "oracle_decode",
            OracleError::Config(_) => "oracle_config",
            OracleError::ReplayMiss(_) => "oracle_replay_miss",
        }
    }

    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            OracleError::Network(_) | OracleError::Timeout(_) => true,
            OracleError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
