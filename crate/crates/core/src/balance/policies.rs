use std::borrow::Cow;
use std::collections::HashMap;

use super::{BalancerConfig, LoadIndex, MoveList};
use crate::error::{Error, Result};
use crate::partition::{Assignment, BatchStats, Move, Placement, ReorderedBatch};

/// Private simulation state for one policy invocation.
struct Working<'a> {
    stats: &'a BatchStats,
    reordered: &'a ReorderedBatch,
    // Cloned on the first move only.
    assignment: Cow<'a, Assignment>,
    index: Option<LoadIndex>,
    tpt: Vec<u64>,
    moved: Vec<bool>,
    moves: Vec<Move>,
    scanned: u64,
    max_moves: usize,
    threshold: u64,
}

impl<'a> Working<'a> {
    fn new(
        stats: &'a BatchStats,
        assignment: &'a Assignment,
        reordered: &'a ReorderedBatch,
        cfg: &BalancerConfig,
        with_index: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let n_threads = assignment.n_threads();
        if stats.tpt.len() != n_threads
            || stats.group_counts.len() != assignment.n_groups()
            || reordered.n_threads() != n_threads
        {
            return Err(Error::Inconsistent(
                "balancer inputs disagree on thread or group counts".into(),
            ));
        }
        Ok(Self {
            stats,
            reordered,
            assignment: Cow::Borrowed(assignment),
            index: with_index.then(|| LoadIndex::new(stats.tpt.clone())),
            tpt: stats.tpt.clone(),
            moved: vec![false; assignment.n_groups()],
            moves: Vec::new(),
            scanned: 0,
            max_moves: cfg.effective_max_moves(n_threads),
            threshold: cfg.thread_threshold,
        })
    }

    fn count(&self, group: u32) -> u64 {
        self.stats.group_counts[group as usize]
    }

    fn eligible(&self, group: u32) -> bool {
        !self.moved[group as usize]
    }

    fn budget_left(&self) -> bool {
        self.moves.len() < self.max_moves
    }

    /// Most and least loaded threads, if their gap exceeds the threshold.
    fn imbalanced_pair(&self) -> Option<(usize, usize)> {
        let index = self
            .index
            .as_ref()
            .expect("heap policies keep a load index");
        let (hi, lo) = (index.max(), index.min());
        (self.tpt[hi] - self.tpt[lo] > self.threshold).then_some((hi, lo))
    }

    fn eligible_groups(&self, thread: usize) -> impl Iterator<Item = u32> + '_ {
        self.assignment
            .groups_of(thread)
            .iter()
            .copied()
            .filter(|&g| self.eligible(g))
    }

    fn push(&mut self, mv: Move) -> Result<()> {
        self.assignment.to_mut().apply_move(&mv)?;
        let c = self.count(mv.group);
        self.tpt[mv.from] -= c;
        self.tpt[mv.to] += c;
        if let Some(index) = self.index.as_mut() {
            index.set(mv.from, self.tpt[mv.from]);
            index.set(mv.to, self.tpt[mv.to]);
        }
        self.moved[mv.group as usize] = true;
        self.moves.push(mv);
        Ok(())
    }

    fn finish(self) -> MoveList {
        MoveList {
            moves: self.moves,
            scanned_tuples: self.scanned,
            projected_tpt: self.tpt,
        }
    }
}

/// Shared loop of the heap-driven policies: while the most and least loaded
/// threads differ by more than the threshold, move the group chosen by
/// `select` from the former to the back of the latter.
fn heap_loop<F>(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
    mut select: F,
) -> Result<MoveList>
where
    F: FnMut(&mut Working<'_>, usize, usize) -> Option<u32>,
{
    let mut w = Working::new(stats, assignment, reordered, cfg, true)?;
    while w.budget_left() {
        let Some((hi, lo)) = w.imbalanced_pair() else {
            break;
        };
        let Some(group) = select(&mut w, hi, lo) else {
            break;
        };
        w.push(Move::new(group, hi, lo, Placement::Back))?;
    }
    Ok(w.finish())
}

/// Baseline: never moves anything.
pub fn no_balance(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    Ok(Working::new(stats, assignment, reordered, cfg, false)?.finish())
}

/// Moves the first group of the most loaded thread. Stops when that group
/// was already moved in this invocation or holds no tuples of this batch.
pub fn get_first(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    heap_loop(stats, assignment, reordered, cfg, |w, hi, _| {
        w.assignment
            .groups_of(hi)
            .front()
            .copied()
            .filter(|&g| w.eligible(g) && w.count(g) > 0)
    })
}

/// Moves the donor's most frequent group in this batch (lowest id on ties).
///
/// Selection reads the exact per-group counts; the donor's whole segment is
/// charged as scanned.
pub fn check_all(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    heap_loop(stats, assignment, reordered, cfg, |w, hi, _| {
        w.scanned += w.reordered.segment_len(hi) as u64;
        w.eligible_groups(hi)
            .map(|g| (w.count(g), g))
            .filter(|&(c, _)| c > 0)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, g)| g)
    })
}

/// Scans the donor's segment and picks the first group seen
/// `ceil(pot * tpt[donor] / ngroups(donor))` times, falling back to the most
/// frequent group observed if none reaches the limit.
pub fn prob_check(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    let pot = cfg.pot;
    heap_loop(stats, assignment, reordered, cfg, |w, hi, _| {
        let ngroups = w.assignment.groups_of(hi).len().max(1);
        let limit = ((pot * w.tpt[hi] as f64 / ngroups as f64).ceil() as u64).max(1);
        let mut seen: HashMap<u32, u64> = HashMap::new();
        let mut visited = 0u64;
        let mut hit = None;
        for t in w.reordered.segment(hi) {
            visited += 1;
            // Tuples of groups that already left the donor are skipped.
            if w.assignment.thread_of(t.group) != hi || !w.eligible(t.group) {
                continue;
            }
            let c = seen.entry(t.group).or_insert(0);
            *c += 1;
            if *c >= limit {
                hit = Some(t.group);
                break;
            }
        }
        w.scanned += visited;
        hit.or_else(|| {
            seen.into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(g, _)| g)
        })
    })
}

/// Picks the donor group whose move leaves the smallest absolute gap between
/// the donor and the receiver; stops when no group strictly narrows the gap.
pub fn best_balance(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    heap_loop(stats, assignment, reordered, cfg, |w, hi, lo| {
        w.scanned += w.reordered.segment_len(hi) as u64;
        let (donor, receiver) = (w.tpt[hi] as i128, w.tpt[lo] as i128);
        let gap = donor - receiver;
        w.eligible_groups(hi)
            .map(|g| {
                let c = w.count(g) as i128;
                (((donor - c) - (receiver + c)).abs(), g)
            })
            .min()
            .filter(|&(new_gap, _)| new_gap < gap)
            .map(|(_, g)| g)
    })
}

/// Neighbour chain: every thread between the most and least loaded passes one
/// group one step towards the least loaded thread. `tmax`/`tmin` are
/// re-evaluated after each full chain.
pub fn shift(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    let mut w = Working::new(stats, assignment, reordered, cfg, true)?;
    while w.budget_left() {
        let Some((hi, lo)) = w.imbalanced_pair() else {
            break;
        };
        if hi > lo {
            // Donor gives its first group to the previous thread.
            if !w
                .assignment
                .groups_of(hi)
                .front()
                .is_some_and(|&g| w.eligible(g))
            {
                break;
            }
            for i in lo + 1..=hi {
                if !w.budget_left() {
                    break;
                }
                if let Some(&g) = w.assignment.groups_of(i).front() {
                    if w.eligible(g) {
                        w.push(Move::new(g, i, i - 1, Placement::Back))?;
                    }
                }
            }
        } else {
            // Donor gives its last group to the next thread.
            if !w
                .assignment
                .groups_of(hi)
                .back()
                .is_some_and(|&g| w.eligible(g))
            {
                break;
            }
            for i in hi..lo {
                if !w.budget_left() {
                    break;
                }
                if let Some(&g) = w.assignment.groups_of(i).back() {
                    if w.eligible(g) {
                        w.push(Move::new(g, i, i + 1, Placement::Front))?;
                    }
                }
            }
        }
    }
    Ok(w.finish())
}

/// One pass over adjacent thread pairs, moving a boundary group from the
/// heavier to the lighter thread when their gap exceeds the threshold.
pub fn shift_local(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    let mut w = Working::new(stats, assignment, reordered, cfg, false)?;
    let n_threads = w.tpt.len();
    for i in 0..n_threads.saturating_sub(1) {
        if !w.budget_left() {
            break;
        }
        let (left, right) = (w.tpt[i], w.tpt[i + 1]);
        if left > right + w.threshold {
            if let Some(&g) = w.assignment.groups_of(i).back() {
                if w.eligible(g) {
                    w.push(Move::new(g, i, i + 1, Placement::Front))?;
                }
            }
        } else if right > left + w.threshold {
            if let Some(&g) = w.assignment.groups_of(i + 1).front() {
                if w.eligible(g) {
                    w.push(Move::new(g, i + 1, i, Placement::Back))?;
                }
            }
        }
    }
    Ok(w.finish())
}
