use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Malformed or inconsistent data (file formats, shapes, labels).
    Data,
    /// Numerical failure: non-convergence, non-PSD input, non-finite values.
    Numerical,
}

impl ErrorKind {
    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    NotConverged(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::NotSymmetric(_)
            | Error::NotPsd(_)
            | Error::NotConverged(_)
            | Error::NonFinite(_) => ErrorKind::Numerical,
            Error::Cycle { source, .. } => source.kind(),
            Error::Shape(_)
            | Error::InvalidInput(_)
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Data,
        }
    }

    /// Short stable identifier of the variant, for machine-readable output.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidInput(_) => "invalid-input",
            Error::Config(_) => "config",
            Error::NotSymmetric(_) => "not-symmetric",
            Error::NotPsd(_) => "not-psd",
            Error::NotConverged(_) => "not-converged",
            Error::NonFinite(_) => "non-finite",
            Error::Format { .. } => "format",
            Error::Cycle { source, .. } => source.tag(),
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_cycle(self, cycle: usize) -> Self {
        Error::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}
