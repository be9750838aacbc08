use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("synthesis error: {0}")]
    Synthesis(String),

    #[error("feature error: {0}")]
    Feature(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
