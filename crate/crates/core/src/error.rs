use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("transition matrix has no steady state: {0}")]
    NoSteadyState(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NumericFailure { iterations: usize },

    #[error("infeasible balancer: {0}")]
    InfeasibleBalancer(String),

    #[error("flow ledger corrupted at step {t}, node {node}: {detail}")]
    LedgerCorruption {
        t: usize,
        node: usize,
        detail: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("deviation identity residual {residual:e} at step {t} exceeds tolerance")]
    DiagnosticsFailure { t: usize, residual: f64 },

    #[error("window [{start}, {end}] extends beyond the recorded series of length {len}")]
    Range {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
