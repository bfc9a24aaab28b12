use std::path::PathBuf;

use thiserror::Error;

/// Why a token sequence is not an imaging system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// No sensor terminal anywhere in the string.
    NoSensor,
    /// The string does not end with a decoding algorithm.
    NoAlgorithm,
    /// A control algorithm is not followed by the hardware it controls.
    DanglingA2,
    /// Some other token cannot continue any derivation.
    Unexpected,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::NoSensor => "no_sensor",
            RejectReason::NoAlgorithm => "no_algorithm",
            RejectReason::DanglingA2 => "dangling_A2",
            RejectReason::Unexpected => "unexpected_token",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected ({reason}) at token {position}")]
    Rejected { reason: RejectReason, position: usize },

    #[error("empty system string")]
    EmptyString,

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid terminal: {0}")]
    InvalidTerminal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no cameras placed; label undefined")]
    NoCameras,

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),

    #[error("target not visible in observation {0}")]
    NotVisible(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
