use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pruning pipeline.
///
/// [`Error::is_io`] separates filesystem failures from validation failures so
/// callers can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("malformed tensors.bin: {0}")]
    Format(String),
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("token id {id} out of range for vocab of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty document")]
    EmptyDocument,
    #[error("document `{id}`: {source}")]
    Document {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no documents match {0}")]
    EmptyCorpus(String),
    #[error("invalid neuron {0}")]
    InvalidNeuron(String),
    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("calibration missed sigma {sigma:.4}: closest achievable ratio {closest:.6} at tau {tau:.4}")]
    CalibrationFailed { sigma: f64, closest: f64, tau: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for filesystem failures (as opposed to validation failures).
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::MissingFile(_) => true,
            Error::Document { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
