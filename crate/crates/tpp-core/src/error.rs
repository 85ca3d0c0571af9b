use thiserror::Error;

/// Errors surfaced by the engine.
#[derive(Debug, Error)]
pub enum TppError {
    #[error("invalid edge ({u}, {v}): {reason}")]
    InvalidEdge { u: usize, v: usize, reason: String },

    #[error("empty node set")]
    EmptyNodeSet,

    #[error("invalid node set: {0}")]
    InvalidNodeSet(String),

    #[error("no anchor node available")]
    NoAnchorNode,

    #[error("graph is disconnected: {0}")]
    Disconnected(String),

    #[error("empty prototype pool")]
    EmptyPool,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-contiguous task id {got}, expected {expected}")]
    NonContiguousTaskId { got: usize, expected: usize },

    #[error("probability {value} for {name} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("zero-norm embedding row {0}: cosine similarity undefined")]
    ZeroNormRow(usize),

    #[error("backbone is frozen; weights may not be mutated")]
    BackboneFrozen,

    #[error("backbone must be frozen before prompt training")]
    BackboneNotFrozen,

    #[error("frozen backbone weights changed (hash {expected:#018x} -> {got:#018x})")]
    FrozenWeightsChanged { expected: u64, got: u64 },

    #[error("train node {node} has no label")]
    UnlabeledNode { node: usize },

    #[error("label {label} is not one of this task's classes")]
    UnknownClass { label: u32 },

    #[error("node counts disagree: {left_name} has {left}, {right_name} has {right}")]
    InconsistentNodeCount {
        left_name: String,
        left: usize,
        right_name: String,
        right: usize,
    },

    #[error("alignment size mismatch: {left} vs {right} nodes")]
    AlignmentSizeMismatch { left: usize, right: usize },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("accuracy matrix entry ({t}, {j}) missing")]
    MatrixEntryMissing { t: usize, j: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TppError>;
