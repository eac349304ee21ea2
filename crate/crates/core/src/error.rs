use std::path::PathBuf;

use thiserror::Error;

use crate::types::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("invalid prediction matrix: {}", format_violations(.0))]
    InvalidMatrix(Vec<Violation>),

    #[error("invalid gold labels: {0}")]
    InvalidGold(String),

    #[error("invalid description set `{name}`: {reason}")]
    InvalidDescriptionSet { name: String, reason: String },

    #[error("invalid embeddings: {0}")]
    InvalidEmbeddings(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("non-finite score at position {0}")]
    InvalidScore(usize),

    #[error("missing description embedding `{0}`")]
    MissingEmbedding(String),

    #[error("pattern `{0}` must contain exactly one `{{}}` placeholder")]
    BadPattern(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("columns share no observed items")]
    NoOverlap,

    #[error("at least two annotators are required")]
    NeedTwoAnnotators,

    #[error("at least two points are required, got {0}")]
    TooFewPoints(usize),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("embedding service: {0}")]
    EmbeddingService(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        row: usize,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            row,
            column,
            message: message.into(),
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    const SHOWN: usize = 5;
    let mut parts: Vec<String> = violations.iter().take(SHOWN).map(|v| v.to_string()).collect();
    if violations.len() > SHOWN {
        parts.push(format!("and {} more", violations.len() - SHOWN));
    }
    parts.join("; ")
}
