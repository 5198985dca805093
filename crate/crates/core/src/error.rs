use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the validation pipeline.
///
/// Variants split into two families: input/validation problems (bad rows,
/// violated preconditions, missing files) and computation failures (degenerate
/// agreement, disconnected comparison graphs, non-finite iterates). The CLI
/// maps the first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: row {row}: {message}")]
    Row {
        source_name: String,
        row: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("artifact {} was produced under config {found}, current config is {expected} (use --force to override)", path.display())]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("alpha undefined: no expected disagreement")]
    AlphaUndefined,

    #[error("comparison graph is disconnected ({components} components) and reg = 0")]
    Disconnected { components: usize },

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("undefined entry: {0}")]
    Undefined(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn row(source_name: impl Into<String>, row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            source_name: source_name.into(),
            row,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for degenerate-numerics outcomes as opposed to bad input.
    pub fn is_computation(&self) -> bool {
        match self {
            Error::AlphaUndefined | Error::Disconnected { .. } | Error::NonFinite(_) | Error::Undefined(_) => true,
            Error::Stage { source, .. } => source.is_computation(),
            _ => false,
        }
    }

    /// Process exit code for the CLI: 1 for validation errors, 2 for computation errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_computation() {
            2
        } else {
            1
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
