use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),

    #[error("dangling foreign key {from} -> {to}: {reason}")]
    DanglingForeignKey {
        from: String,
        to: String,
        reason: String,
    },

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("no join path between `{from}` and `{to}`")]
    NoPath { from: String, to: String },

    #[error("template `{id}`: {message}")]
    Template { id: String, message: String },

    #[error("template `{id}`: bad assignment: {message}")]
    Assignment { id: String, message: String },

    #[error("paraphrase table line {line}: {message}")]
    ParaphraseLine { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty input sequence")]
    EmptyInput,

    #[error("unbound placeholders: {}", .0.join(", "))]
    UnboundPlaceholders(Vec<String>),

    #[error("non-finite loss on example {example}")]
    NonFiniteLoss { example: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),

    #[error("sql execution failed: {0}")]
    Execution(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
