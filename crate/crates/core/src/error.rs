use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),

    /// A factorization or linear solve hit a singular (or numerically
    /// singular) operator.
    #[error("singular system: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} is not stable (spectral abscissa {abscissa:.6e})")]
    Unstable { what: &'static str, abscissa: f64 },

    #[error("non-finite value detected at time step {step}")]
    NonFinite { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParameter(_) | Error::UnknownTag(_)
        )
    }

    /// Process exit status: 2 for configuration errors, 3 for numerical
    /// failures, 1 for I/O and artifact problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            e if e.is_config_error() => 2,
            Error::Io(_) | Error::Json(_) | Error::Artifact { .. } => 1,
            _ => 3,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
