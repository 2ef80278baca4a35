//! Group-to-thread assignment, per-batch statistics and the two-pass
//! thread-contiguous reordering of a batch.

use std::collections::VecDeque;
use std::fmt;

use crate::datagen::Tuple;
use crate::error::{Error, Result};

/// Which end of the destination thread's group list receives a moved group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    Front,
    Back,
}

/// Reassignment of one group from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Move {
    pub group: u32,
    pub from: usize,
    pub to: usize,
    pub placement: Placement,
}

impl Move {
    pub const fn new(group: u32, from: usize, to: usize, placement: Placement) -> Self {
        Self {
            group,
            from,
            to,
            placement,
        }
    }
}

/// Bidirectional group ↔ thread mapping.
///
/// `group_to_thread` is dense over group ids; each thread keeps an ordered
/// list of the groups it owns. The two views are kept mutually consistent by
/// every mutating method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    group_to_thread: Vec<u32>,
    thread_to_groups: Vec<VecDeque<u32>>,
}

impl Assignment {
    /// Splits `0..n_groups` into `n_threads` contiguous ranges whose sizes
    /// differ by at most one (the longer ranges come first).
    pub fn initial(n_groups: usize, n_threads: usize) -> Result<Self> {
        if n_threads == 0 {
            return Err(Error::InvalidConfig(
                "thread count must be at least 1".into(),
            ));
        }
        if n_threads > u32::MAX as usize || n_groups > u32::MAX as usize {
            return Err(Error::InvalidConfig(
                "thread or group count exceeds 32 bits".into(),
            ));
        }
        if n_threads > n_groups {
            log::warn!(
                "{n_threads} threads for {n_groups} groups: {} threads will own no group",
                n_threads - n_groups
            );
        }
        let base = n_groups / n_threads;
        let extra = n_groups % n_threads;
        let mut group_to_thread = vec![0u32; n_groups];
        let mut thread_to_groups = Vec::with_capacity(n_threads);
        let mut next = 0usize;
        for t in 0..n_threads {
            let len = base + usize::from(t < extra);
            let groups: VecDeque<u32> = (next..next + len).map(|g| g as u32).collect();
            for &g in &groups {
                group_to_thread[g as usize] = t as u32;
            }
            thread_to_groups.push(groups);
            next += len;
        }
        Ok(Self {
            group_to_thread,
            thread_to_groups,
        })
    }

    /// Builds an assignment from explicit per-thread group lists, which must
    /// cover `0..n_groups` exactly once.
    pub fn from_thread_lists(n_groups: usize, lists: Vec<Vec<u32>>) -> Result<Self> {
        if lists.is_empty() {
            return Err(Error::InvalidConfig(
                "thread count must be at least 1".into(),
            ));
        }
        let mut group_to_thread = vec![u32::MAX; n_groups];
        for (t, groups) in lists.iter().enumerate() {
            for &g in groups {
                match group_to_thread.get_mut(g as usize) {
                    Some(slot) if *slot == u32::MAX => *slot = t as u32,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "group {g} is out of range or listed twice"
                        )))
                    }
                }
            }
        }
        let a = Self {
            group_to_thread,
            thread_to_groups: lists.into_iter().map(VecDeque::from).collect(),
        };
        a.audit().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(a)
    }

    pub fn n_groups(&self) -> usize {
        self.group_to_thread.len()
    }

    pub fn n_threads(&self) -> usize {
        self.thread_to_groups.len()
    }

    pub fn thread_of(&self, group: u32) -> usize {
        self.group_to_thread[group as usize] as usize
    }

    pub fn groups_of(&self, thread: usize) -> &VecDeque<u32> {
        &self.thread_to_groups[thread]
    }

    /// Applies a single move in place. The assignment is left untouched when
    /// the move is rejected.
    pub fn apply_move(&mut self, mv: &Move) -> Result<()> {
        let n_threads = self.n_threads();
        if mv.to >= n_threads || mv.from >= n_threads {
            return Err(Error::InvalidConfig(format!(
                "move {mv:?} references a thread outside 0..{n_threads}"
            )));
        }
        let stale = || Error::StaleMove {
            group: mv.group,
            source_thread: mv.from,
        };
        if mv.group as usize >= self.n_groups() || self.thread_of(mv.group) != mv.from {
            return Err(stale());
        }
        let source = &mut self.thread_to_groups[mv.from];
        let pos = source
            .iter()
            .position(|&g| g == mv.group)
            .ok_or_else(stale)?;
        source.remove(pos);
        let dest = &mut self.thread_to_groups[mv.to];
        match mv.placement {
            Placement::Front => dest.push_front(mv.group),
            Placement::Back => dest.push_back(mv.group),
        }
        self.group_to_thread[mv.group as usize] = mv.to as u32;
        Ok(())
    }

    /// Returns a new assignment with `moves` applied in order.
    pub fn apply_moves(&self, moves: &[Move]) -> Result<Self> {
        let mut next = self.clone();
        for mv in moves {
            next.apply_move(mv)?;
        }
        Ok(next)
    }

    /// Full consistency check of both mapping directions.
    pub fn audit(&self) -> Result<()> {
        let mut seen = vec![false; self.n_groups()];
        for (t, groups) in self.thread_to_groups.iter().enumerate() {
            for &g in groups {
                let slot = seen.get_mut(g as usize).ok_or_else(|| {
                    Error::Inconsistent(format!("thread {t} lists unknown group {g}"))
                })?;
                if *slot {
                    return Err(Error::Inconsistent(format!("group {g} listed twice")));
                }
                *slot = true;
                if self.thread_of(g) != t {
                    return Err(Error::Inconsistent(format!(
                        "group {g} listed on thread {t} but mapped to {}",
                        self.thread_of(g)
                    )));
                }
            }
        }
        if let Some(g) = seen.iter().position(|&s| !s) {
            return Err(Error::Inconsistent(format!("group {g} has no owner")));
        }
        Ok(())
    }
}

/// Text dump, one `thread <t>: g g g` line per thread.
impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, groups) in self.thread_to_groups.iter().enumerate() {
            write!(f, "thread {t}:")?;
            for g in groups {
                write!(f, " {g}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Per-batch tuple counts by group and by thread (`tpt`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchStats {
    pub group_counts: Vec<u64>,
    pub tpt: Vec<u64>,
}

impl BatchStats {
    pub fn total(&self) -> u64 {
        self.tpt.iter().sum()
    }

    /// `max(tpt) - min(tpt)`, zero when there are no threads.
    pub fn imbalance(&self) -> u64 {
        let max = self.tpt.iter().copied().max().unwrap_or(0);
        let min = self.tpt.iter().copied().min().unwrap_or(0);
        max - min
    }
}

/// First pass: count tuples per group and per thread.
pub fn count_batch(batch: &[Tuple], assignment: &Assignment) -> Result<BatchStats> {
    let n_groups = assignment.n_groups();
    let mut group_counts = vec![0u64; n_groups];
    let mut tpt = vec![0u64; assignment.n_threads()];
    for (index, t) in batch.iter().enumerate() {
        let g = t.group as usize;
        if g >= n_groups {
            return Err(Error::GroupOutOfRange {
                index,
                group: t.group,
                n_groups,
            });
        }
        group_counts[g] += 1;
        tpt[assignment.group_to_thread[g] as usize] += 1;
    }
    Ok(BatchStats { group_counts, tpt })
}

/// A batch laid out thread-major, each thread's tuples in one contiguous
/// segment, plus the per-thread start offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReorderedBatch {
    pub data: Vec<Tuple>,
    /// `n_threads + 1` offsets; the last entry equals `data.len()`.
    pub indicator: Vec<usize>,
}

impl ReorderedBatch {
    pub fn n_threads(&self) -> usize {
        self.indicator.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segment(&self, thread: usize) -> &[Tuple] {
        &self.data[self.indicator[thread]..self.indicator[thread + 1]]
    }

    pub fn segment_len(&self, thread: usize) -> usize {
        self.indicator[thread + 1] - self.indicator[thread]
    }

    pub fn segments(&self) -> impl Iterator<Item = &[Tuple]> + '_ {
        self.indicator.windows(2).map(|w| &self.data[w[0]..w[1]])
    }
}

/// Second pass: place every tuple at its final slot.
///
/// Within a thread's segment, groups follow the thread's list order and each
/// group's tuples keep their arrival order.
pub fn reorder_batch(
    batch: &[Tuple],
    assignment: &Assignment,
    stats: &BatchStats,
) -> Result<ReorderedBatch> {
    let mut touches = 0usize;
    reorder_probed(batch, assignment, stats, &mut touches)
}

/// [`reorder_batch`] that also counts tuple reads and writes.
pub(crate) fn reorder_probed(
    batch: &[Tuple],
    assignment: &Assignment,
    stats: &BatchStats,
    touches: &mut usize,
) -> Result<ReorderedBatch> {
    let n_groups = assignment.n_groups();
    let n_threads = assignment.n_threads();
    if stats.group_counts.len() != n_groups || stats.tpt.len() != n_threads {
        return Err(Error::Inconsistent(
            "stats dimensions do not match the assignment".into(),
        ));
    }
    if stats.total() != batch.len() as u64 {
        return Err(Error::Inconsistent(format!(
            "stats cover {} tuples, batch has {}",
            stats.total(),
            batch.len()
        )));
    }

    let mut cursor = vec![0usize; n_groups];
    let mut end = vec![0usize; n_groups];
    let mut indicator = Vec::with_capacity(n_threads + 1);
    let mut offset = 0usize;
    for (t, groups) in assignment.thread_to_groups.iter().enumerate() {
        indicator.push(offset);
        for &g in groups {
            cursor[g as usize] = offset;
            offset += stats.group_counts[g as usize] as usize;
            end[g as usize] = offset;
        }
        if (offset - indicator[t]) as u64 != stats.tpt[t] {
            return Err(Error::Inconsistent(format!(
                "tpt[{t}] = {} but its groups hold {} tuples",
                stats.tpt[t],
                offset - indicator[t]
            )));
        }
    }
    indicator.push(offset);

    let mut data = vec![Tuple::new(0, 0); batch.len()];
    for (index, t) in batch.iter().enumerate() {
        let g = t.group as usize;
        if g >= n_groups {
            return Err(Error::GroupOutOfRange {
                index,
                group: t.group,
                n_groups,
            });
        }
        let slot = cursor[g];
        if slot >= end[g] {
            return Err(Error::Inconsistent(format!(
                "group {g} has more tuples than its count of {}",
                stats.group_counts[g]
            )));
        }
        data[slot] = *t;
        cursor[g] = slot + 1;
        *touches += 2;
    }
    Ok(ReorderedBatch { data, indicator })
}
