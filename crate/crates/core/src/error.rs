use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid geometry{}: {reason}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    InvalidGeometry { layer: Option<usize>, reason: String },

    #[error("non-finite value at offset {0}")]
    NonFinite(usize),

    #[error("weights do not match configuration: {0}")]
    WeightMismatch(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cycle detected at node {0}")]
    CycleDetected(usize),

    #[error("leaf label {0:?} appears more than once")]
    DuplicateLeaf(String),

    #[error("label {0:?} is not covered by any leaf")]
    UncoveredLabel(String),

    #[error("arity mismatch at node {node}: {reason}")]
    ArityMismatch { node: usize, reason: String },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("node {id} ({name}) has fewer than two populated branches")]
    DegenerateNode { id: usize, name: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("label {label} out of range for {n} classes")]
    LabelOutOfRange { label: usize, n: usize },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("empty value list")]
    EmptyList,

    #[error("invalid fold count k={k} for {count} samples")]
    InvalidK { k: usize, count: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("label {label:?}: declared {declared} samples, found {actual}")]
    CountMismatch {
        label: String,
        declared: usize,
        actual: usize,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image header: {0}")]
    CorruptHeader(String),

    #[error("truncated image payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn geometry(layer: Option<usize>, reason: impl Into<String>) -> Self {
        Error::InvalidGeometry {
            layer,
            reason: reason.into(),
        }
    }
}
