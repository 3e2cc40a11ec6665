use thiserror::Error;

/// Errors produced by the graph, matrix, schedule and protocol layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("graph must have a self-loop at every node (missing at node {0})")]
    MissingSelfLoop(usize),

    #[error("graph must not contain self-loops (found at node {0})")]
    UnexpectedSelfLoop(usize),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("node count mismatch: expected {expected}, got {actual}")]
    NodeCountMismatch { expected: usize, actual: usize },

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix entry ({row}, {col}) = {value} is not finite")]
    NonFiniteEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not {0} stochastic")]
    NotStochastic(&'static str),

    #[error("entry ({row}, {col}) = {value} is below the floor {floor}")]
    BelowFloor {
        row: usize,
        col: usize,
        value: f64,
        floor: f64,
    },

    #[error("invalid range: k1 = {k1} > k2 = {k2}")]
    InvalidRange { k1: usize, k2: usize },

    #[error("matrix sequence has no element at index {0}")]
    MissingMatrix(usize),

    #[error("empty vector")]
    EmptyVector,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("block schedule too short: index {needed} requested, {available} blocks defined")]
    ScheduleTooShort { needed: usize, available: usize },

    #[error(
        "block {block} ({len} iterations) is too short to cover every edge in sequential wake mode"
    )]
    BlockTooShort { block: usize, len: usize },

    #[error("trace violation at iteration {iteration}: {reason}")]
    TraceViolation { iteration: usize, reason: String },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("trace parse error on line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
