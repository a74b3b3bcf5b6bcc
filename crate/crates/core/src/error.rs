use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: `Config` -> 2, `Io`/`Trace`/`Weights`
/// -> 3, `Numerical` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or inconsistent experiment setup.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error{}: {source}", path_suffix(.path))]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data (trace files, CSV schemas).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Non-finite loss or other numerical breakdown during training.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("weight file error: {0}")]
    Weights(#[from] WeightError),
}

/// Failure modes of the binary weight-file format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightError {
    #[error("bad magic bytes (not a weight file)")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch (file corrupt)")]
    ChecksumMismatch,
    #[error("shape mismatch for '{name}': expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("layer list mismatch: expected {expected}, found {found}")]
    LayerMismatch { expected: String, found: String },
    #[error("invalid utf-8 in layer name")]
    BadName,
}

impl Error {
    pub fn io(source: std::io::Error, path: impl Into<PathBuf>) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" ({})", p.display()),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
