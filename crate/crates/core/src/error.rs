use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: schema error: {message} (column `{column}`)")]
    Schema {
        path: PathBuf,
        column: String,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Validation {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("prompt template `{version}`: {message}")]
    Template { version: String, message: String },

    #[error("backend `{backend_id}` failed for example `{example_id}`: {message}")]
    Backend {
        backend_id: String,
        example_id: String,
        message: String,
    },

    #[error("backend `{backend_id}` returned an empty explanation for example `{example_id}`")]
    EmptyResponse {
        backend_id: String,
        example_id: String,
    },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("data error for example `{example_id}`: {message}")]
    Data { example_id: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the root cause is an explanation backend failure.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::Backend { .. } | Error::EmptyResponse { .. } => true,
            Error::Stage { source, .. } | Error::Run { source, .. } => source.is_backend(),
            _ => false,
        }
    }
}
