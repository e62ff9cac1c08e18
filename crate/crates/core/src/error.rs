use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not symmetric (entry ({row}, {col}) differs from its transpose)")]
    NotSymmetric { row: usize, col: usize },

    #[error("operator is not positive semidefinite (quadratic form {value:.3e} below tolerance)")]
    NotPsd { value: f64 },

    #[error("operator is not positive definite")]
    NotPositiveDefinite,

    #[error("solver failed to converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("dimension {dim} exceeds the eigen oracle cap {cap}")]
    OracleCap { dim: usize, cap: usize },

    #[error("eigen oracle failed to converge")]
    OracleFailure,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid cover: global index {0} belongs to no subdomain")]
    InvalidCover(usize),

    #[error("invalid partition-of-unity weights: {0}")]
    InvalidWeights(String),

    #[error("decomposition impossible: family is not complete")]
    DecompositionImpossible,

    #[error("scheme precondition violated: {0}")]
    SchemePrecondition(String),

    #[error("assembly mismatch: inconsistent system, relative residual {residual:.3e}")]
    AssemblyMismatch { residual: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing exact solution: {0}")]
    MissingExact(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Error {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
