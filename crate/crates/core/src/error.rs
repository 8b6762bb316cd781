use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line} is not valid UTF-8")]
    Format { path: PathBuf, line: usize },

    #[error("line counts differ: {left} in {left_path} vs {right} in {right_path}")]
    Alignment {
        left_path: PathBuf,
        left: usize,
        right_path: PathBuf,
        right: usize,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("vocabulary cap {0} leaves no room beyond the reserved ids")]
    VocabCap(usize),

    #[error("gap {gap} needs {count} insertions, more than the limit of {limit}")]
    ScriptOverflow {
        gap: usize,
        count: usize,
        limit: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite score at slot {slot}")]
    NonFinite { slot: usize },

    #[error("policy contract violated: {0}")]
    Contract(String),

    #[error("no reference for sentence id {0}")]
    UnknownSentence(usize),

    #[error("degenerate design: all source lengths equal {0}")]
    DegenerateDesign(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sentence {id}: initialization tokens are not an ordered subsequence of the {which}")]
    AnchorAlignment { id: usize, which: &'static str },

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
