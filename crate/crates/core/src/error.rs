use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    /// ADMM ran out of iterations; residuals are the last ones observed.
    #[error(
        "{solver} exceeded {iterations} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    Convergence {
        solver: &'static str,
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("graph generation failed after {attempts} attempts: {constraint}")]
    GenerationFailed { attempts: usize, constraint: String },

    #[error("degenerate residual variance for variable {variable} (condition {condition})")]
    DegenerateVariance { variable: usize, condition: usize },

    #[error("undefined power: the true differential graph has no edges")]
    UndefinedPower,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
