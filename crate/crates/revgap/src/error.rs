use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {x} outside 1..={n}")]
    InvalidVertex { x: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("rank {rank} out of range for n = {n} (n! = {cap})")]
    RankOutOfRange { rank: usize, n: usize, cap: usize },

    #[error("partition too coarse: n = {n}, block length {ell} gives fewer than two blocks")]
    PartitionTooCoarse { n: usize, ell: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid block exchange: {0}")]
    InvalidExchange(String),

    #[error("table length {got} does not match n! = {expected} for n = {n}")]
    SizeMismatch { n: usize, expected: usize, got: usize },

    #[error("n = {n} exceeds the enumeration cap {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("operator dimension {dim} exceeds the dense cap {cap}")]
    DenseCap { dim: usize, cap: usize },

    #[error("invalid chain specification: {0}")]
    InvalidSpec(String),

    #[error("entropy requested for a table with negative entries")]
    NegativeEntries,

    #[error("degenerate (constant) test function")]
    DegenerateFunction,

    #[error("chain is reducible on the full state space; spectral gap is 0")]
    ReducibleChain,

    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("fewer than {needed} usable points for a fit (got {got})")]
    FitUnavailable { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
