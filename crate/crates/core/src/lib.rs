//! Partition-parallel streaming group-by aggregation with runtime skew
//! handling.
//!
//! A coordinator slices the stream into batches, lays each batch out so that
//! every logical thread reads one contiguous segment, and lets a rebalancing
//! policy migrate groups between threads whenever the per-thread tuple counts
//! drift apart by more than a threshold. Logical threads keep a sliding window
//! per group and recompute the window sum for every tuple.
//!
//! Modules, bottom-up:
//! - [`datagen`]: seeded uniform / zipf / permuted-zipf tuple streams.
//! - [`partition`]: group ↔ thread assignment and the two-pass reorder.
//! - [`balance`]: the rebalancing policies.
//! - [`engine`]: window store plus simulated, parallel and serial executors.
//! - [`harness`]: the pipeline, presets, sweeps and CSV output.

pub mod balance;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod harness;
pub mod partition;

pub use balance::{rebalance, BalancerConfig, LoadIndex, MoveList, Policy};
pub use datagen::{batches, Batch, DatasetKind, DatasetSpec, Tuple};
pub use engine::{
    serial_reference, AggregateTrace, CostModel, IterationReport, ParallelExecutor, WindowStore,
};
pub use error::{Error, Result};
pub use harness::{
    preset, run, run_normalized, sweep, write_csv, Backend, ExperimentReport, Pipeline, RunConfig,
    SweepAxis, SweepPoint,
};
pub use partition::{
    count_batch, reorder_batch, Assignment, BatchStats, Move, Placement, ReorderedBatch,
};
