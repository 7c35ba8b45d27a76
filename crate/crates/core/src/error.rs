use thiserror::Error;

/// Errors raised by the sequence clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: no sequences found")]
    EmptyCorpus,

    #[error("duplicate sequence id `{0}`")]
    DuplicateId(String),

    #[error("line {line}: blank token (whitespace-only field)")]
    BlankToken { line: usize },

    #[error("line {line}: malformed FASTA: {reason}")]
    MalformedFasta { line: usize, reason: String },

    #[error("sequence `{id}` is empty")]
    EmptySequence { id: String },

    #[error("sequence `{id}` has length {length}; at least 2 tokens are needed for a window")]
    TooShortForWindow { id: String, length: usize },

    #[error("window size must be at least 1")]
    ZeroWindow,

    #[error("window size {n} leaves no target for sequences: {}", ids.join(", "))]
    WindowTooLarge { n: usize, ids: Vec<String> },

    #[error("segmented matrix has no rows")]
    EmptyMatrix,

    #[error("feature arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("zero vector for `{id}`: cosine dissimilarity is undefined")]
    ZeroVector { id: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("distance matrix contains a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),

    #[error("k = {k} is out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("index requires at least {required} clusters, got {got}")]
    TooFewClusters { required: usize, got: usize },

    #[error("calinski-harabasz is undefined for k = {k} with {n} points")]
    DegenerateCh { k: usize, n: usize },

    #[error("pattern of length {pattern} does not fit in sequences of length {length}")]
    PatternDoesNotFit { pattern: usize, length: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
