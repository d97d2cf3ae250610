use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Exit status for malformed input or arguments.
pub const EXIT_INPUT: i32 = 2;
/// Exit status when a solver hit its iteration cap; output is still written.
pub const EXIT_NONCONVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error(transparent)]
    Engine(#[from] rerank_core::Error),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Self::Format {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        EXIT_INPUT
    }
}

/// Problems in the content of an input file.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected `LPMTFEAT`, found {found:02x?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported feature file version {version} at byte 8")]
    UnsupportedVersion { version: u32 },

    #[error("truncated {what} at byte {offset}: need {needed} more bytes, {available} available")]
    Truncated {
        what: &'static str,
        offset: u64,
        needed: u64,
        available: u64,
    },

    #[error("id at byte {offset} is not valid UTF-8")]
    InvalidUtf8 { offset: u64 },

    #[error("duplicate id `{id}` at byte {offset}")]
    DuplicateId { id: String, offset: u64 },

    #[error("{extra} unexpected trailing bytes after the payload at byte {offset}")]
    TrailingBytes { offset: u64, extra: u64 },

    #[error("non-finite value in row {row}, column {col} (byte {offset})")]
    NonFinite { row: u64, col: u64, offset: u64 },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("empty feature set")]
    Empty,
}
