use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema violation in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("duplicate session key ({subject}, {session})")]
    DuplicateSession { subject: String, session: String },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("bad epoch file {path}: {msg}")]
    EpochFile { path: PathBuf, msg: String },

    #[error("device map for '{device}' lacks canonical labels: {missing:?}")]
    MissingChannels { device: String, missing: Vec<String> },

    #[error("unknown channel preset '{name}' (known: {known:?})")]
    UnknownPreset { name: String, known: Vec<String> },

    #[error("{stage}: {msg}")]
    Stage { stage: &'static str, msg: String },

    #[error("degenerate channel {channel}: {msg}")]
    DegenerateChannel { channel: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("feature id mismatch: '{expected}' vs '{got}'")]
    FeatureId { expected: String, got: String },

    #[error("{0}")]
    Embedding(String),

    #[error("empty {0} set")]
    Empty(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn stage(stage: &'static str, msg: impl Into<String>) -> Self {
        Error::Stage { stage, msg: msg.into() }
    }

    /// True for errors caused by invalid user input rather than bad data.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnknownPreset { .. })
    }
}
