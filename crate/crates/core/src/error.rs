//! Crate-wide error type.
//!
//! Variants are grouped by failure class so binaries can map them onto
//! coarse exit codes without matching on message strings: configuration
//! problems, bad input data, gateway/transport failures, and unparseable
//! model output.

use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by binaries to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid or inconsistent configuration (task files, templates, flags).
    Config,
    /// Malformed or missing input data (datasets, banks, fixtures, IO).
    Input,
    /// The completion backend failed or a replay fixture was missing.
    Gateway,
    /// A model response could not be parsed into the expected structure.
    Parse,
}

/// Everything that can go wrong inside the core library.
#[derive(Debug, Error)]
pub enum Error {
    // --- configuration -------------------------------------------------
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("template `{template_id}` declares placeholder `{placeholder}` that never appears in its text")]
    UnusedPlaceholder {
        template_id: String,
        placeholder: String,
    },

    #[error("template `{template_id}` uses undeclared placeholder `{placeholder}`")]
    UndeclaredPlaceholder {
        template_id: String,
        placeholder: String,
    },

    #[error("template `{template_id}` rendered without a binding for `{placeholder}`")]
    MissingBinding {
        template_id: String,
        placeholder: String,
    },

    // --- input data ----------------------------------------------------
    #[error("{path}:{line}: {reason}", path = .path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}")]
    InvalidData(String),

    #[error("duplicate example id `{0}`")]
    DuplicateExampleId(String),

    #[error("example `{example_id}` has label `{label}` which is not in the task label set")]
    UnknownLabel { example_id: String, label: String },

    #[error("need {needed} examples but only {available} are available")]
    InsufficientExamples { needed: usize, available: usize },

    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // --- gateway ---------------------------------------------------------
    #[error("no recorded response for fingerprint {fingerprint} at sequence index {sequence_index}")]
    ReplayMiss {
        fingerprint: String,
        sequence_index: u32,
    },

    #[error("backend request failed after {attempts} attempt(s): {reason}")]
    Backend { attempts: u32, reason: String },

    #[error("backend returned an empty response")]
    EmptyResponse,

    // --- model-output parsing ---------------------------------------------
    #[error("no numbered hypothesis items found in response")]
    NoHypotheses,

    #[error("no final-answer marker found in response")]
    MissingAnswerMarker,

    #[error("answer `{0}` does not match any task label")]
    UnmatchedAnswer(String),
}

impl Error {
    /// The coarse class of this error, for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Config(_) | UnknownTemplate(_) | UnusedPlaceholder { .. }
            | UndeclaredPlaceholder { .. } | MissingBinding { .. } => ErrorClass::Config,
            MalformedRecord { .. } | InvalidData(_) | DuplicateExampleId(_)
            | UnknownLabel { .. } | InsufficientExamples { .. } | Io { .. } => ErrorClass::Input,
            ReplayMiss { .. } | Backend { .. } | EmptyResponse => ErrorClass::Gateway,
            NoHypotheses | MissingAnswerMarker | UnmatchedAnswer(_) => ErrorClass::Parse,
        }
    }

    /// Shorthand for IO errors tagged with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
