use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input record. `line` is 1-based.
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("invalid document {doc_id}: {message}")]
    InvalidDocument { doc_id: String, message: String },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocument(String),

    #[error("missing POS tag on token {index} ({surface:?}); supply precomputed np_chunks for this sentence")]
    MissingPos { index: usize, surface: String },

    #[error("span {start}..{end} out of range for sentence of {len} tokens")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("graph: {0}")]
    Graph(String),

    #[error("seed {0:?} is not a node of the graph")]
    SeedNotInGraph(String),

    #[error("seed {0:?} is isolated (no edges after idf weighting)")]
    IsolatedSeed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training: {0}")]
    Training(String),

    #[error("insufficient eligible mentions for negative sampling: need {needed}, have {available}")]
    InsufficientNegatives { needed: usize, available: usize },

    #[error("feature configuration mismatch: model was trained with {model}, extraction requested {requested}")]
    FeatureConfigMismatch { model: String, requested: String },

    #[error("gold annotation references unknown document {0:?}")]
    UnknownGoldDocument(String),

    #[error("gold annotations are empty")]
    EmptyGold,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (files, schemas, configuration)
    /// as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::InvalidDocument { .. }
                | Error::DuplicateDocument(_)
                | Error::MissingPos { .. }
                | Error::Config(_)
                | Error::FeatureConfigMismatch { .. }
                | Error::UnknownGoldDocument(_)
                | Error::EmptyGold
                | Error::Json(_)
        )
    }
}
