use std::path::PathBuf;

use serde_json::json;
use synvec::report::ReportError;
use synvec::sweep::SweepError;
use synvec::tensor_store::StoreError;
use synvec::toy::ToyError;
use synvec::vector_ops::VectorError;

pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_EVALUATOR: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// A failure classified by exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, "usage", message)
    }

    pub fn domain(kind: &str, message: impl Into<String>) -> Self {
        Self::new(EXIT_DOMAIN, kind, message)
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        Self {
            message: format!("i/o error on {}: {source}", path.display()),
            path: Some(path),
            ..Self::new(EXIT_IO, "io", "")
        }
    }

    fn new(code: i32, kind: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind: kind.to_string(),
            message: message.into(),
            path: None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut err = json!({
            "kind": self.kind,
            "exit_code": self.code,
            "message": self.message,
        });
        if let Some(p) = &self.path {
            err["path"] = json!(p.display().to_string());
        }
        json!({ "error": err })
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Io { path, .. } => Self {
                path: Some(path),
                ..Self::new(EXIT_IO, "io", message)
            },
            other => Self::domain(other.kind(), message),
        }
    }
}

impl From<VectorError> for CliError {
    fn from(e: VectorError) -> Self {
        match e {
            VectorError::Store(s) => s.into(),
            other => Self::domain(other.kind(), other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        let message = e.to_string();
        match e {
            SweepError::Vector(v) => v.into(),
            SweepError::Io { path, .. } => Self {
                path: Some(path),
                ..Self::new(EXIT_IO, "io", message)
            },
            SweepError::AllPointsFailed(_) | SweepError::NoSuccessfulRecords => {
                Self::new(EXIT_EVALUATOR, "evaluator", message)
            }
            SweepError::InvalidGrid(_) | SweepError::InvalidConfig(_) => {
                Self::new(EXIT_USAGE, "usage", message)
            }
            SweepError::NonPositiveBaseline(_) => Self::domain("non_positive_baseline", message),
            SweepError::KeyMismatch(_) => Self::domain("key_mismatch", message),
        }
    }
}

impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        let message = e.to_string();
        match e {
            ToyError::Vector(v) => v.into(),
            ToyError::Store(s) => s.into(),
            ToyError::Io { path, .. } => Self {
                path: Some(path),
                ..Self::new(EXIT_IO, "io", message)
            },
            ToyError::InvalidSpec(_) | ToyError::InvalidConfig(_) => {
                Self::new(EXIT_USAGE, "usage", message)
            }
            ToyError::Divergence { .. } => Self::domain("divergence", message),
            ToyError::ShapeMismatch(_) => Self::domain("shape_mismatch", message),
            ToyError::EmptyDataset => Self::domain("empty_dataset", message),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let message = e.to_string();
        match e {
            ReportError::Vector(v) => v.into(),
            ReportError::Sweep(s) => s.into(),
            ReportError::Io { path, .. } => Self {
                path: Some(path),
                ..Self::new(EXIT_IO, "io", message)
            },
            ReportError::InvalidInput(_) => Self::domain("invalid_input", message),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
