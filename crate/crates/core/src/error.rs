use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by [`ErrorKind`] so callers (the CLI in particular)
/// can map them onto exit codes without matching every variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length error: {0}")]
    Length(String),
    #[error("payload error at offset {offset}: {reason}")]
    Payload { offset: usize, reason: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("count error: {0}")]
    Count(String),
    #[error("class error: class id {0} is outside 0..=3")]
    Class(u8),
    #[error("label error: {0}")]
    Label(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("frame error: {0}")]
    Frame(String),
    #[error("state error: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("record {index} (line {line}): {reason}")]
    Record {
        index: usize,
        line: usize,
        reason: String,
    },
    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("incomplete trial: {0}")]
    IncompleteTrial(String),
    #[error("stream quality error: {0}")]
    StreamQuality(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification of [`Error`] values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or parameters supplied by the caller.
    Usage,
    /// Malformed, missing or insufficient input data.
    Data,
    /// Non-finite values during numerical work.
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Param(_) | Error::Range(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }

    /// Short stable tag naming the variant, used in machine-readable output.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Length(_) => "length",
            Error::Payload { .. } => "payload",
            Error::Shape(_) => "shape",
            Error::Count(_) => "count",
            Error::Class(_) => "class",
            Error::Label(_) => "label",
            Error::Range(_) => "range",
            Error::Param(_) => "param",
            Error::Numeric(_) => "numeric",
            Error::Frame(_) => "frame",
            Error::State(_) => "state",
            Error::Data(_) => "data",
            Error::Record { .. } => "record",
            Error::NotFound(_) => "not_found",
            Error::Checkpoint(_) => "checkpoint",
            Error::IncompleteTrial(_) => "incomplete_trial",
            Error::StreamQuality(_) => "stream_quality",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
