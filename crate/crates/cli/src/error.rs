use serde::Serialize;
use serde_json::{json, Value};

use oscillator_pdmp::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Validation,
    Io,
    Numerical,
    CheckFailed,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage | ErrorKind::Validation | ErrorKind::Io => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::CheckFailed => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, message)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }

    pub fn to_json(&self) -> String {
        let mut body = json!({
            "kind": self.kind,
            "exit_code": self.exit_code(),
            "message": self.message,
        });
        if let Some(d) = &self.details {
            body["details"] = d.clone();
        }
        json!({ "error": body }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::InvalidArgument(_) | CoreError::DimensionMismatch { .. } | CoreError::SearchTooLarge { .. } => {
                ErrorKind::Validation
            }
            CoreError::NonConvergence { .. } | CoreError::NonFinite { .. } | CoreError::NotPositiveSemidefinite { .. } => {
                ErrorKind::Numerical
            }
            CoreError::Io(_) => ErrorKind::Io,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorKind::Io, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
