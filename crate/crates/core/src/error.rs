use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("non-finite state encountered at step {step}")]
    NonFinite { step: usize },
    #[error("time {time} is not on the snapshot grid")]
    OffGrid { time: f64 },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("{what} {requested} exceeds cap {cap}")]
    CapExceeded { what: &'static str, requested: usize, cap: usize },
    #[error("series terms are growing at order {order}; the expansion is not converging")]
    TermGrowth { order: usize },
    #[error("alpha part is not a sub-multiset of the monomial's coupling pairs")]
    Containment,
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NonFinite { .. } => "non_finite",
            Error::OffGrid { .. } => "off_grid",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::TermGrowth { .. } => "term_growth",
            Error::Containment => "containment",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
