use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while loading data, learning a lexicon or evaluating it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("character {ch:?} at line {line} is outside the configured alphabet")]
    OutOfAlphabet { ch: char, line: usize },

    #[error("unknown phoneme '{token}' at line {line}")]
    UnknownPhoneme { token: String, line: usize },

    #[error("malformed lexicon at line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },

    #[error("unknown word id {0}")]
    UnknownWord(usize),

    #[error("terminals are permanent (word {0})")]
    TerminalDeletion(usize),

    #[error("sequence cannot be parsed with the current lexicon (zero total probability)")]
    Unparseable,

    #[error("all counts are zero")]
    ZeroCounts,

    #[error("no lattice path survived pruning with budget {budget:e}; retry with a smaller prune budget")]
    PrunedAway { budget: f64 },

    #[error("parse covers {parse} terminals but gold segmentation covers {gold}")]
    LengthMismatch { parse: usize, gold: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config at line {line}: {reason}")]
    Config { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
