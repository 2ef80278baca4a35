use std::io;

use thiserror::Error;

/// Errors produced by the aggregation engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tuple {index} has group {group}, but only {n_groups} groups exist")]
    GroupOutOfRange {
        index: usize,
        group: u32,
        n_groups: usize,
    },

    #[error("stale move: group {group} is not owned by thread {source_thread}")]
    StaleMove { group: u32, source_thread: usize },

    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown preset '{name}' (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("malformed replay file: {0}")]
    Replay(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
