use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate critical point at {location:?} (singular Hessian)")]
    DegenerateCriticalPoint { location: Vec<f64> },

    #[error("quadrature on [{a}, {b}] did not reach tolerance (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("unsupported gain regime: {0}")]
    UnsupportedRegime(String),

    #[error("operation requires a quadratic potential in dimension {expected_dim}")]
    NotQuadratic { expected_dim: usize },

    #[error("limit variance diverges (V(t) keeps growing up to t = {horizon})")]
    DivergentVariance { horizon: f64 },

    #[error("non-finite state at t = {t} on path {path_index}")]
    BlowUp { t: f64, path_index: u64 },

    #[error("window holds {found} recorded points, need at least {needed}")]
    InsufficientResolution { found: usize, needed: usize },

    #[error("empty sample window")]
    EmptyWindow,

    #[error("{}", config_location(.line, .key, .message))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn config_location(line: &Option<usize>, key: &Option<String>, message: &str) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!("config line {l}, key `{k}`: {message}"),
        (Some(l), None) => format!("config line {l}: {message}"),
        (None, Some(k)) => format!("config key `{k}`: {message}"),
        (None, None) => format!("config: {message}"),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
