//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("edge list contains no records")]
    NoRecords,

    #[error("period indices are not contiguous: period {missing} is empty (periods run 0..={max})")]
    PeriodGap { missing: usize, max: usize },

    #[error("period {period} has no positive entries")]
    AllZeroPeriod { period: usize },

    #[error("no common positive edges between periods {from} and {to}")]
    NoCommonEdges { from: usize, to: usize },

    #[error("epsilon must be nonnegative, got {0}")]
    NegativeEpsilon(f64),

    #[error("k must be between 1 and {n}, got {k}")]
    KOutOfRange { k: usize, n: usize },

    #[error("network is tagged {got:?}, expected {expected:?}")]
    WrongStage { expected: crate::network::Stage, got: crate::network::Stage },

    #[error("model requires at least 3 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("need at least 2 periods, got {0}")]
    TooFewPeriods(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unmasked row ({t}, {i}) has a nonpositive entry; apply an epsilon floor first")]
    NonPositiveRow { t: usize, i: usize },

    #[error("row ({t}, {i}) sums to {sum}, expected 1; run the relative transform first")]
    RowNotNormalized { t: usize, i: usize, sum: f64 },

    #[error("non-finite {what} at iteration {iteration}")]
    ChainAbort { what: String, iteration: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} nodes missing from relevance table: {1:?}")]
    RelevanceJoin(usize, Vec<u64>),

    #[error("chain directory holds no draws")]
    EmptyChain,

    #[error("rank correlation undefined for a constant input vector")]
    ConstantVector,

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code: 1 usage, 2 data validation, 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::ChainAbort { .. } => 3,
            _ => 2,
        }
    }
}
