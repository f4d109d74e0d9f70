use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid probability {0}; expected 0 <= p_out <= p_in <= 1")]
    InvalidProbability(f64),

    #[error("graph has no edges (2m = 0)")]
    EmptyGraph,

    #[error("vertices {0} and {1} are in the same community")]
    SameCommunity(usize, usize),

    #[error("plan contains no TC blocks")]
    NoBlocks,

    #[error("window list is empty")]
    EmptyWindowList,

    #[error("invalid dendrogram: {0}")]
    InvalidDendrogram(String),

    #[error("bad magic; not a BitTCF container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    BadVersion(u32),

    #[error("truncated stream")]
    Truncated,

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("pipeline traces come from different workloads ({0} vs {1} blocks)")]
    WorkloadMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
