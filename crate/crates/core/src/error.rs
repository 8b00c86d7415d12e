use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("missing key: {0}")]
    Key(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes and log lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::EmptyInput(_) => "input",
            Error::Config(_) | Error::Key(_) | Error::Range(_) => "config",
            Error::InsufficientData(_) | Error::DegenerateInput(_) | Error::Fit(_) => "data",
            Error::Shape(_) | Error::Index(_) => "shape",
            Error::Load(_) => "checkpoint",
            Error::Io { .. } | Error::Stream(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
