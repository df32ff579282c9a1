use thiserror::Error;

/// Errors produced by the simulator and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {what} supports at most {max} participants, got {got}")]
    Capacity {
        what: &'static str,
        max: usize,
        got: usize,
    },

    #[error("utility oracle failed: {0}")]
    Oracle(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("empty coalition")]
    EmptyCoalition,

    #[error("total aggregation weight is zero")]
    ZeroWeight,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient pool: {0}")]
    InsufficientPool(String),

    #[error("training failed in round {round} for participant {participant}: {source}")]
    Training {
        round: usize,
        participant: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
