/// Crate-wide error type.
///
/// Two broad classes are distinguished because callers react differently:
/// precondition violations (bad geometry, out-of-range parameters, resource
/// guards) are caller bugs or configuration problems, while numerical errors
/// (quadrature that did not reach tolerance, an indefinite Green matrix)
/// indicate the computation itself could not be completed as requested.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code convention used by the command-line tool:
    /// 3 for numerical failures, 4 for precondition violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_) => 4,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
