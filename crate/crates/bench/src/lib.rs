//! Fixtures shared by the criterion benches.

use skewagg_core::{
    batches, count_batch, preset, reorder_batch, Assignment, BatchStats, ReorderedBatch, RunConfig,
    Tuple,
};

/// One batch of a preset's stream, counted and reordered under the initial
/// assignment.
pub struct Fixture {
    pub config: RunConfig,
    pub batch: Vec<Tuple>,
    pub assignment: Assignment,
    pub stats: BatchStats,
    pub reordered: ReorderedBatch,
}

impl Fixture {
    /// Takes the first batch of `preset_name`. Panics on unknown presets.
    pub fn first_batch(preset_name: &str) -> Self {
        let config = preset(preset_name).expect("preset");
        let batch = batches(config.dataset.stream().expect("stream"), config.batch_size)
            .expect("batch size")
            .next()
            .expect("non-empty dataset")
            .tuples;
        let assignment =
            Assignment::initial(config.dataset.n_groups, config.n_threads()).expect("assignment");
        let stats = count_batch(&batch, &assignment).expect("count");
        let reordered = reorder_batch(&batch, &assignment, &stats).expect("reorder");
        Self {
            config,
            batch,
            assignment,
            stats,
            reordered,
        }
    }
}
