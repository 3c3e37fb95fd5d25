use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("missing embedding for {} id(s): {}", .0.len(), preview(.0))]
    MissingEmbedding(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run failed at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("run failed: {0}")]
    Run(String),

    #[error("embedding service error: {0}")]
    Service(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    s
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Integrity(_)
            | Error::MissingEmbedding(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Service(_) => 3,
            Error::Divergence { .. } | Error::Run(_) => 4,
        }
    }
}
