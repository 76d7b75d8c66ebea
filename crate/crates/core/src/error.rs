use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver did not converge after {iterations} iterations (marginal violation {violation:.3e})")]
    Convergence { iterations: usize, violation: f64 },

    #[error("brute-force oracle limited to 8 atoms per side, got {0}")]
    OracleSize(usize),

    #[error("coupling row {0} carries no mass")]
    DegenerateRow(usize),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("calibration fields have zero total variance")]
    DegenerateVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("at t={t}: {source}")]
    AtTime {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attach a stream time index to a solver error.
    pub fn at_time(self, t: usize) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping time annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 for input problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Convergence { .. } | Error::DegenerateRow(_) => 3,
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
