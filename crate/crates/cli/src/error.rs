use std::fmt;

use linkerr::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter { .. } | Error::SampleTooLarge { .. } | Error::NotReflexive(_) => EXIT_CONFIG,
            Error::InfeasibleComponents { .. } | Error::TooManyFailures { .. } | Error::Empty(_) => EXIT_ESTIMATION,
            Error::ArityMismatch { .. }
            | Error::DuplicateTruthId(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::io(e.to_string())
    }
}
