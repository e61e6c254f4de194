//! Command-line failure type mapping onto the documented exit codes:
//! 0 success, 2 usage, 3 numerical failure, 4 precondition violation.

use std::fmt;

#[derive(Debug)]
pub enum CliFail {
    /// Bad invocation: unknown values, missing parameters, malformed lists.
    Usage(String),
    /// Library-reported failure; carries its own exit-code convention.
    Lib(rilab::Error),
    /// Filesystem problem reading inputs or writing artifacts.
    Io(String),
}

pub type CliResult<T> = Result<T, CliFail>;

impl CliFail {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliFail::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliFail::Usage(_) => 2,
            CliFail::Lib(e) => e.exit_code() as u8,
            // Missing files and unwritable outputs are environment
            // preconditions.
            CliFail::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliFail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliFail::Usage(msg) => write!(f, "{msg}"),
            CliFail::Lib(e) => write!(f, "{e}"),
            CliFail::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<rilab::Error> for CliFail {
    fn from(e: rilab::Error) -> Self {
        CliFail::Lib(e)
    }
}

impl From<std::io::Error> for CliFail {
    fn from(e: std::io::Error) -> Self {
        CliFail::Io(e.to_string())
    }
}
