use std::path::PathBuf;

use crate::types::Edit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports.
///
/// Variants are grouped so a front end can map them onto distinct exit codes
/// with [`Error::class`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {message}")]
    Validation { context: String, message: String },

    #[error("case {case_id}, variant {variant}: perturbation {edit} overlaps reference error span {error_span}")]
    Faithfulness {
        case_id: String,
        variant: usize,
        edit: Edit,
        error_span: Edit,
    },

    #[error("missing hypothesis for case {case_id}, variant {variant}")]
    MissingHypothesis { case_id: String, variant: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot generate perturbation for {sample_id}: {reason}")]
    Generation { sample_id: String, reason: String },
}

/// Coarse grouping of [`Error`] variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Schema,
    Invariant,
    Input,
    Config,
    Generation,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Io => "io",
            ErrorClass::Schema => "schema",
            ErrorClass::Invariant => "invariant",
            ErrorClass::Input => "input",
            ErrorClass::Config => "config",
            ErrorClass::Generation => "generation",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Parse { .. } => ErrorClass::Schema,
            Error::Validation { .. } | Error::Faithfulness { .. } => ErrorClass::Invariant,
            Error::MissingHypothesis { .. }
            | Error::EmptyCorpus
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. } => ErrorClass::Input,
            Error::Config(_) => ErrorClass::Config,
            Error::Generation { .. } => ErrorClass::Generation,
        }
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
