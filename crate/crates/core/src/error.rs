use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("{op}: dimension mismatch, expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        expected: String,
        found: String,
    },

    /// An operation produced NaN or infinity.
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    /// An inner solver iterate became non-finite.
    #[error("non-finite iterate at inner iteration {iteration}: {iterate:?}")]
    NonFiniteIterate { iteration: usize, iterate: Vec<f64> },

    /// A caller violated a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Missing or inconsistent data (e.g. ground truth absent).
    #[error("data error: {0}")]
    Data(String),

    /// Random problem generation could not satisfy its requirements.
    #[error("generation error: {0}")]
    Generation(String),

    /// Exhaustive enumeration requested beyond the supported size.
    #[error("enumeration budget exceeded: n = {n} exceeds the limit of {limit}")]
    Budget { n: usize, limit: usize },

    /// The optimality gap is undefined for a zero reference objective.
    #[error("optimality gap undefined for a zero reference objective")]
    UndefinedGap,

    /// A file could not be parsed.
    #[error("{}: parse error at {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    /// A file carries an unsupported format version.
    #[error("{}: unsupported format version {found} (expected {expected})", path.display())]
    Version { path: PathBuf, expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
