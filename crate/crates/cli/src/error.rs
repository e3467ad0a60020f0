use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
    HashMismatch,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: message.into(),
        }
    }

    pub fn hash_mismatch(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::HashMismatch,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
            ErrorKind::HashMismatch => 3,
        }
    }
}

pub trait ResultExt<T> {
    fn or_validation(self, context: impl Display) -> Result<T, CliError>;
    fn or_runtime(self, context: impl Display) -> Result<T, CliError>;
}

impl<T, E: Display> ResultExt<T> for Result<T, E> {
    fn or_validation(self, context: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::validation(format!("{context}: {e}")))
    }

    fn or_runtime(self, context: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::runtime(format!("{context}: {e}")))
    }
}
