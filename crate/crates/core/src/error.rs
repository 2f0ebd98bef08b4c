use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::KernelError;

/// One failed invariant, located by a dotted field path such as
/// `hubs[1].capacity_units`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldViolation {
    pub path: String,
    pub message: String,
}

/// Every violation found by a validation pass, in discovery order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<FieldViolation>,
}

impl ValidationReport {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(FieldViolation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn mentions(&self, path_fragment: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.path.contains(path_fragment))
    }

    pub(crate) fn into_result<T>(self, value: T) -> Result<T, Error> {
        if self.is_empty() {
            Ok(value)
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
    #[error("network is disconnected: bus {unreachable} cannot be reached from bus {from}")]
    Disconnected { from: u32, unreachable: u32 },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("parse error{}: line {line}, column {column}: {message}", fmt_path(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model is infeasible: {0}")]
    Infeasible(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn fmt_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(err: serde_json::Error, path: Option<&std::path::Path>) -> Self {
        Error::Parse {
            path: path.map(|p| p.to_path_buf()),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(err: std::io::Error, path: &std::path::Path) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source: err,
        }
    }

    /// True for a solver wall-clock timeout.
    pub fn is_timeout(&self) -> bool {
        matches!(self, Error::Kernel(KernelError::Timeout { .. }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(e, Some(path)))
}

pub(crate) fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(e, path))
}
