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

    /// JSON that does not match the expected schema. `location` carries the
    /// field path and, when available, the line/column of the failure.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("dangling reference: {kind} id {id} does not resolve")]
    DanglingReference { kind: &'static str, id: u64 },

    #[error("{what} out of range: {value}")]
    Range { what: String, value: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("segmentation decode error: {0}")]
    Decode(String),

    #[error("token `{0}` is not in the embedding vocabulary")]
    OutOfVocabulary(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("rule {rule} uses the overlap topology but has no threshold")]
    MissingThreshold { rule: String },

    #[error("could not derive thresholds, no ground-truth pairs observed for: {}", rules.join(", "))]
    UnresolvedThreshold { rules: Vec<String> },

    #[error("search-area expression error: {0}")]
    Expression(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Stage,
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::MissingThreshold { .. } | Error::Expression(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DanglingReference { .. }
            | Error::Range { .. }
            | Error::InvalidData(_)
            | Error::Decode(_)
            | Error::OutOfVocabulary(_) => ErrorClass::Data,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Stage,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Stage => 4,
        }
    }
}
