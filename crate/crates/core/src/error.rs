use std::path::PathBuf;

/// Errors surfaced by the library. Each variant maps onto one of the CLI
/// exit-code classes through [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("every document was removed by preprocessing")]
    AllDocumentsFiltered,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("values have zero variance")]
    ZeroVariance,

    #[error("debates too small to scale: {}", .0.join(", "))]
    DebateTooSmall(Vec<String>),

    #[error("sample {value} lies outside the support of a positive prior")]
    OutOfSupport { value: f64 },

    #[error("Poisson rate overflowed (x = {x}, max |eta| = {max_abs_eta})")]
    RateOverflow { x: f64, max_abs_eta: f64 },

    #[error("ELBO became non-finite at step {step}")]
    NonFiniteElbo { step: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 for I/O, 2 for validation, 3 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Parse { .. }
            | Error::AllDocumentsFiltered
            | Error::ShapeMismatch(_)
            | Error::Invalid(_)
            | Error::ZeroVariance
            | Error::DebateTooSmall(_) => 2,
            Error::OutOfSupport { .. } | Error::RateOverflow { .. } | Error::NonFiniteElbo { .. } => 3,
        }
    }
}
