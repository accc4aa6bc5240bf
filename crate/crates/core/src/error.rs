use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("correlation matrix is not positive definite")]
    Factorization,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("no sample strictly exceeds the threshold {threshold}")]
    EmptyTail { threshold: f64 },

    #[error("direction {index}: {source}")]
    AtDirection {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("cost model violated: design cost {kappa} must lie in [0, {failure_cost})")]
    ModelViolation { kappa: f64, failure_cost: f64 },

    #[error("candidate {index} misclassified: p_f = {p_f} exceeds alpha = {alpha}")]
    Classification { index: usize, p_f: f64, alpha: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("numerical breakdown: {0}")]
    Numeric(String),

    #[error("no feasible design found along the search ray up to t = {t_max}")]
    NoFeasibleDesign { t_max: f64 },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_direction(index: usize, source: Error) -> Self {
        Error::AtDirection {
            index,
            source: Box::new(source),
        }
    }

    /// The innermost error, looking through direction annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtDirection { source, .. } => source.root(),
            other => other,
        }
    }
}
