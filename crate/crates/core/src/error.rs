use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single failed check on a user-supplied configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("infeasible region count: {0}")]
    Infeasible(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("corrupted artifact {path}: {message}")]
    Corruption { path: PathBuf, message: String },

    #[error("invalid configuration: {}", format_fields(.0))]
    Validation(Vec<FieldError>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.path, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Geometry(_) => "geometry",
            Error::Schema(_) => "schema",
            Error::Estimation(_) => "estimation",
            Error::Divergence { .. } => "divergence",
            Error::Infeasible(_) => "infeasible",
            Error::NotFound(_) => "not_found",
            Error::Corruption { .. } => "corruption",
            Error::Validation(_) => "validation",
            Error::Stage { .. } => unreachable!(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
