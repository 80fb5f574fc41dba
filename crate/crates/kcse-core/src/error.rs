//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(
        "{malformed} of {total} data lines in {path} are malformed; wrong format for this file?"
    )]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown concept '{name}'{}", suggestion_text(.suggestions))]
    UnknownConcept {
        name: String,
        suggestions: Vec<String>,
    },

    #[error("unknown relation '{0}'")]
    UnknownRelation(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("classes missing from the graph: {}", .0.join(", "))]
    MissingClasses(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

fn suggestion_text(suggestions: &[String]) -> String {
    if suggestions.is_empty() {
        String::new()
    } else {
        format!(" (closest matches: {})", suggestions.join(", "))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
