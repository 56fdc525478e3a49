use std::path::PathBuf;

use serde_json::{json, Value};

/// One violated configuration constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// Dotted key path, e.g. `delay.N`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.iter().map(|v| format!("{}: {}", v.path, v.message)).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("{}: {message}", file.display())]
    Format { file: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Solver(#[from] delaych_core::Error),
    #[error("audits failed: {}", .0.join(", "))]
    Audit(Vec<String>),
    #[error("study failed: {0}")]
    Study(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    pub fn format(file: impl Into<PathBuf>, message: impl Into<String>) -> CliError {
        CliError::Format { file: file.into(), message: message.into() }
    }

    pub fn invalid(path: &str, message: impl Into<String>) -> CliError {
        CliError::Validation(vec![Violation { path: path.into(), message: message.into() }])
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ParseError",
            CliError::Validation(_) => "ValidationError",
            CliError::Format { .. } => "FormatError",
            CliError::Io { .. } => "IoError",
            CliError::Solver(e) => e.code(),
            CliError::Audit(_) => "AuditFailure",
            CliError::Study(_) => "StudyFailure",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Audit(_) | CliError::Study(_) => 2,
            CliError::Solver(e) => match e.root() {
                delaych_core::Error::InvalidParameter(_) | delaych_core::Error::InvalidScenario(_) => 4,
                _ => 3,
            },
            CliError::Parse(_) | CliError::Validation(_) | CliError::Format { .. } | CliError::Io { .. } => 4,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "code": self.code(), "message": self.to_string() });
        match self {
            CliError::Validation(list) => {
                v["violations"] = list.iter().map(|x| json!({ "path": x.path, "message": x.message })).collect();
            }
            CliError::Format { file, .. } => v["file"] = json!(file.display().to_string()),
            CliError::Io { path, .. } => v["path"] = json!(path.display().to_string()),
            CliError::Solver(delaych_core::Error::AtStep { step, time, .. }) => {
                v["step"] = json!(step);
                v["time"] = json!(time);
            }
            CliError::Audit(names) => v["audits"] = json!(names),
            _ => {}
        }
        v
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
