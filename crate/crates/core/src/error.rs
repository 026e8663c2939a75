use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GolferError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GolferError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record that could not be decoded. Lines are 1-based.
    #[error("{source_name}:{line}: parse error: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// A decoded record that breaks one of its invariants.
    #[error("validation error for `{subject}`: {rule}")]
    Validation { subject: String, rule: String },

    /// Pairwise NLI records that should exist but do not.
    #[error("incomplete NLI logits, missing {} pair(s): {}", .missing.len(), .missing.join(", "))]
    Completeness { missing: Vec<String> },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("dimension mismatch for `{id}`: expected {expected}, found {found}")]
    Dimension {
        id: String,
        expected: usize,
        found: usize,
    },

    /// Batch-file lookups that missed; the listed ids must be embedded by
    /// another extractor pass.
    #[error("missing embeddings for {} text(s): {}", .ids.len(), .ids.join(", "))]
    MissingEmbeddings { ids: Vec<String> },

    #[error("embedding request `{request_id}` failed: {message}")]
    Http { request_id: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A record that decoded but was rejected, with where it came from.
    #[error("{source_name}:{line}: {source}")]
    Located {
        source_name: String,
        line: usize,
        #[source]
        source: Box<GolferError>,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<GolferError>,
    },
}

impl GolferError {
    /// The innermost error, with stage and location wrappers removed.
    pub fn root(&self) -> &GolferError {
        match self {
            GolferError::Stage { source, .. } | GolferError::Located { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at(self, source_name: &str, line: usize) -> Self {
        GolferError::Located {
            source_name: source_name.to_string(),
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GolferError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(subject: impl Into<String>, rule: impl Into<String>) -> Self {
        GolferError::Validation {
            subject: subject.into(),
            rule: rule.into(),
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl ToString) -> Self {
        GolferError::Parse {
            source_name: source_name.into(),
            line,
            message: message.to_string(),
        }
    }

    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ GolferError::Stage { .. } => already,
            other => GolferError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
