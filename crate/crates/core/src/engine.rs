//! Per-group sliding windows and batch execution.
//!
//! Every ingested tuple lands in its group's ring buffer (evicting the oldest
//! value once the window is full) and the window sum is recomputed from
//! scratch, `window_passes` times. The simulated backend charges abstract cost
//! units per scanned element; the parallel backend runs logical threads on a
//! rayon pool and reports measured nanoseconds.

use std::hint::black_box;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use crate::datagen::Tuple;
use crate::error::{Error, Result};
use crate::partition::ReorderedBatch;

/// Abstract cost charged by the simulated backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    /// Full window scans per ingested tuple.
    pub window_passes: u32,
    pub per_element_cost: u64,
    pub per_tuple_overhead: u64,
    /// Added once to every iteration's makespan.
    pub per_iteration_overhead: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            window_passes: 1,
            per_element_cost: 1,
            per_tuple_overhead: 1,
            per_iteration_overhead: 0,
        }
    }
}

impl CostModel {
    pub fn with_passes(window_passes: u32) -> Self {
        Self {
            window_passes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_passes < 1 {
            return Err(Error::InvalidConfig(
                "window_passes must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Cost of one tuple whose window holds `fill` elements after insertion.
    pub fn tuple_cost(&self, fill: usize) -> u64 {
        self.per_tuple_overhead
            + u64::from(self.window_passes) * self.per_element_cost * fill as u64
    }
}

/// Inserts `attr` into one ring buffer and returns `(window_sum, fill)`.
#[inline]
fn ingest_slot(
    slots: &mut [i32],
    next_pos: &mut u32,
    fill: &mut u32,
    attr: i32,
    passes: u32,
) -> (i64, usize) {
    let cap = slots.len() as u32;
    if *fill < cap {
        slots[*fill as usize] = attr;
        *fill += 1;
    } else {
        slots[*next_pos as usize] = attr;
        *next_pos = (*next_pos + 1) % cap;
    }
    let live = &slots[..*fill as usize];
    let mut sum = 0i64;
    for _ in 0..passes {
        sum = black_box(live).iter().map(|&v| i64::from(v)).sum();
    }
    (sum, *fill as usize)
}

/// Dense `n_groups × window` value matrix with per-group oldest-slot pointers
/// and fill levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowStore {
    window: usize,
    values: Vec<i32>,
    next_pos: Vec<u32>,
    fill: Vec<u32>,
}

impl WindowStore {
    pub fn new(n_groups: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig(
                "window size must be at least 1".into(),
            ));
        }
        if window > u32::MAX as usize {
            return Err(Error::InvalidConfig("window size exceeds 32 bits".into()));
        }
        let len = n_groups
            .checked_mul(window)
            .ok_or_else(|| Error::InvalidConfig("window store size overflows".into()))?;
        Ok(Self {
            window,
            values: vec![0; len],
            next_pos: vec![0; n_groups],
            fill: vec![0; n_groups],
        })
    }

    pub fn n_groups(&self) -> usize {
        self.fill.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn fill(&self, group: u32) -> usize {
        self.fill[group as usize] as usize
    }

    pub fn next_pos(&self, group: u32) -> usize {
        self.next_pos[group as usize] as usize
    }

    /// Window contents from oldest to newest.
    pub fn contents(&self, group: u32) -> Vec<i32> {
        let g = group as usize;
        let slots = &self.values[g * self.window..(g + 1) * self.window];
        let fill = self.fill[g] as usize;
        if fill < self.window {
            slots[..fill].to_vec()
        } else {
            let head = self.next_pos[g] as usize;
            slots[head..]
                .iter()
                .chain(&slots[..head])
                .copied()
                .collect()
        }
    }

    fn check_group(&self, group: u32, index: usize) -> Result<()> {
        if group as usize >= self.n_groups() {
            return Err(Error::GroupOutOfRange {
                index,
                group,
                n_groups: self.n_groups(),
            });
        }
        Ok(())
    }

    fn ingest_unchecked(&mut self, group: u32, attr: i32, passes: u32) -> (i64, usize) {
        let g = group as usize;
        let w = self.window;
        ingest_slot(
            &mut self.values[g * w..(g + 1) * w],
            &mut self.next_pos[g],
            &mut self.fill[g],
            attr,
            passes,
        )
    }

    /// Mutable per-group views, in group order.
    fn group_views(&mut self) -> impl Iterator<Item = GroupWindow<'_>> {
        self.values
            .chunks_mut(self.window)
            .zip(self.next_pos.iter_mut())
            .zip(self.fill.iter_mut())
            .map(|((slots, next_pos), fill)| GroupWindow {
                slots,
                next_pos,
                fill,
            })
    }
}

struct GroupWindow<'a> {
    slots: &'a mut [i32],
    next_pos: &'a mut u32,
    fill: &'a mut u32,
}

impl GroupWindow<'_> {
    fn ingest(&mut self, attr: i32, passes: u32) -> (i64, usize) {
        ingest_slot(self.slots, self.next_pos, self.fill, attr, passes)
    }
}

/// Ingests one tuple and returns `(window_sum, cost_units)`.
pub fn ingest_tuple(
    store: &mut WindowStore,
    group: u32,
    attr: i32,
    model: &CostModel,
) -> Result<(i64, u64)> {
    store.check_group(group, 0)?;
    let (sum, fill) = store.ingest_unchecked(group, attr, model.window_passes);
    Ok((sum, model.tuple_cost(fill)))
}

/// `(group, window_sum)` per ingested tuple, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AggregateTrace {
    pub entries: Vec<(u32, i64)>,
}

impl AggregateTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-group subsequences of emitted sums.
    pub fn per_group(&self, n_groups: usize) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::new(); n_groups];
        for &(g, s) in &self.entries {
            out[g as usize].push(s);
        }
        out
    }
}

/// Outcome of executing one batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IterationReport {
    /// Cost units (simulated) or nanoseconds (parallel), one per logical thread.
    pub per_thread_cost: Vec<u64>,
    pub makespan: u64,
    pub tuples: usize,
    /// `max(tpt) - min(tpt)` of the batch.
    pub imbalance: u64,
    /// Moves emitted by the balancer for this batch's statistics.
    pub moves: usize,
    /// Tuples re-read by the balancer.
    pub scanned: u64,
}

/// Deterministic execution: each logical thread's segment is ingested in
/// order and charged per [`CostModel`].
pub fn process_batch_sim(
    reordered: &ReorderedBatch,
    store: &mut WindowStore,
    model: &CostModel,
    mut trace: Option<&mut AggregateTrace>,
) -> Result<IterationReport> {
    model.validate()?;
    let mut per_thread_cost = Vec::with_capacity(reordered.n_threads());
    for t in 0..reordered.n_threads() {
        let base = reordered.indicator[t];
        let mut cost = 0u64;
        for (i, tuple) in reordered.segment(t).iter().enumerate() {
            store.check_group(tuple.group, base + i)?;
            let (sum, fill) = store.ingest_unchecked(tuple.group, tuple.attr, model.window_passes);
            cost += model.tuple_cost(fill);
            if let Some(trace) = trace.as_deref_mut() {
                trace.entries.push((tuple.group, sum));
            }
        }
        per_thread_cost.push(cost);
    }
    let makespan =
        per_thread_cost.iter().copied().max().unwrap_or(0) + model.per_iteration_overhead;
    Ok(IterationReport {
        per_thread_cost,
        makespan,
        tuples: reordered.len(),
        ..Default::default()
    })
}

/// Runs logical threads as tasks on a fixed-size worker pool.
pub struct ParallelExecutor {
    pool: rayon::ThreadPool,
}

impl ParallelExecutor {
    pub fn new(pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::InvalidConfig("pool size must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(pool_size)
            .thread_name(|i| format!("skewagg-worker-{i}"))
            .build()
            .map_err(|e| Error::Execution(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn pool_size(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Executes the batch and returns once every logical thread has finished.
    /// Per-thread cost is wall-clock nanoseconds.
    pub fn process_batch(
        &self,
        reordered: &ReorderedBatch,
        store: &mut WindowStore,
        model: &CostModel,
        trace: Option<&mut AggregateTrace>,
    ) -> Result<IterationReport> {
        model.validate()?;
        let n_threads = reordered.n_threads();
        let n_groups = store.n_groups();

        // Each group must be touched by a single logical thread so that the
        // per-group windows can be handed out as disjoint mutable views.
        let mut owner = vec![u32::MAX; n_groups];
        for t in 0..n_threads {
            let base = reordered.indicator[t];
            for (i, tuple) in reordered.segment(t).iter().enumerate() {
                store.check_group(tuple.group, base + i)?;
                let slot = &mut owner[tuple.group as usize];
                if *slot == u32::MAX {
                    *slot = t as u32;
                } else if *slot != t as u32 {
                    return Err(Error::Inconsistent(format!(
                        "group {} appears in the segments of threads {} and {t}",
                        tuple.group, *slot
                    )));
                }
            }
        }
        let mut buckets: Vec<Vec<(u32, GroupWindow<'_>)>> =
            (0..n_threads).map(|_| Vec::new()).collect();
        for (g, view) in store.group_views().enumerate() {
            if owner[g] != u32::MAX {
                buckets[owner[g] as usize].push((g as u32, view));
            }
        }

        let passes = model.window_passes;
        let want_trace = trace.is_some();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            self.pool.install(|| {
                buckets
                    .into_par_iter()
                    .enumerate()
                    .map(|(t, mut windows)| {
                        let start = Instant::now();
                        let mut local = Vec::new();
                        let mut cursor: Option<(u32, usize)> = None;
                        for tuple in reordered.segment(t) {
                            let idx = match cursor {
                                Some((g, idx)) if g == tuple.group => idx,
                                _ => {
                                    // `windows` is sorted by group id.
                                    let idx = windows
                                        .binary_search_by_key(&tuple.group, |(g, _)| *g)
                                        .expect("owner map covers every segment group");
                                    cursor = Some((tuple.group, idx));
                                    idx
                                }
                            };
                            let (sum, _) = windows[idx].1.ingest(tuple.attr, passes);
                            if want_trace {
                                local.push((tuple.group, sum));
                            }
                        }
                        (start.elapsed().as_nanos() as u64, local)
                    })
                    .collect::<Vec<_>>()
            })
        }))
        .map_err(|e| {
            let msg = e
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| e.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".into());
            Error::Execution(msg)
        })?;

        let mut per_thread_cost = Vec::with_capacity(n_threads);
        let mut trace = trace;
        for (nanos, local) in outcome {
            per_thread_cost.push(nanos);
            if let Some(trace) = trace.as_deref_mut() {
                trace.entries.extend(local);
            }
        }
        let makespan = per_thread_cost.iter().copied().max().unwrap_or(0);
        Ok(IterationReport {
            per_thread_cost,
            makespan,
            tuples: reordered.len(),
            ..Default::default()
        })
    }
}

/// One-shot convenience wrapper that builds a pool of `pool_size` workers.
pub fn process_batch_parallel(
    reordered: &ReorderedBatch,
    store: &mut WindowStore,
    model: &CostModel,
    pool_size: usize,
    trace: Option<&mut AggregateTrace>,
) -> Result<IterationReport> {
    ParallelExecutor::new(pool_size)?.process_batch(reordered, store, model, trace)
}

/// Single-threaded group-by over the raw stream, used as the correctness
/// oracle for the partitioned engine.
pub fn serial_reference<I>(
    stream: I,
    n_groups: usize,
    window: usize,
    passes: u32,
) -> Result<(WindowStore, AggregateTrace)>
where
    I: IntoIterator<Item = Tuple>,
{
    if passes < 1 {
        return Err(Error::InvalidConfig(
            "window_passes must be at least 1".into(),
        ));
    }
    let mut store = WindowStore::new(n_groups, window)?;
    let mut trace = AggregateTrace::default();
    for (index, t) in stream.into_iter().enumerate() {
        store.check_group(t.group, index)?;
        let (sum, _) = store.ingest_unchecked(t.group, t.attr, passes);
        trace.entries.push((t.group, sum));
    }
    Ok((store, trace))
}
