//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! The oracles deliberately work from the raw batch and the plain thread
//! lists; they never touch `BatchStats`, `LoadIndex` or the policy code.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use skewagg_core::{
    count_batch, reorder_batch, Assignment, BalancerConfig, BatchStats, MoveList, ReorderedBatch,
    Tuple,
};

pub struct Instance {
    pub lists: Vec<Vec<u32>>,
    pub assignment: Assignment,
    pub batch: Vec<Tuple>,
    pub stats: BatchStats,
    pub reordered: ReorderedBatch,
}

impl Instance {
    pub fn new(lists: Vec<Vec<u32>>, batch: Vec<Tuple>) -> Self {
        let n_groups = lists.iter().map(Vec::len).sum();
        let assignment = Assignment::from_thread_lists(n_groups, lists.clone()).unwrap();
        let stats = count_batch(&batch, &assignment).unwrap();
        let reordered = reorder_batch(&batch, &assignment, &stats).unwrap();
        Self {
            lists,
            assignment,
            batch,
            stats,
            reordered,
        }
    }
}

/// Random thread lists (up to `max_groups_per_thread` groups each, shuffled
/// ids) and a skewed batch of at most `max_tuples` tuples.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_threads: usize,
    max_groups_per_thread: usize,
    max_tuples: usize,
) -> Instance {
    let n_threads = rng.random_range(2..=max_threads);
    let sizes: Vec<usize> = (0..n_threads)
        .map(|_| rng.random_range(0..=max_groups_per_thread))
        .collect();
    let n_groups = sizes.iter().sum::<usize>().max(1);
    let mut ids: Vec<u32> = (0..n_groups as u32).collect();
    ids.shuffle(rng);
    let mut lists = Vec::with_capacity(n_threads);
    let mut next = 0;
    for (t, &s) in sizes.iter().enumerate() {
        let s = if t == 0 && sizes.iter().sum::<usize>() == 0 {
            1
        } else {
            s
        };
        lists.push(ids[next..next + s].to_vec());
        next += s;
    }
    // Squared weights give a few heavy groups and many light ones.
    let weights: Vec<u64> = (0..n_groups)
        .map(|_| {
            let w: u64 = rng.random_range(0..=30);
            w * w
        })
        .collect();
    let total: u64 = weights.iter().sum();
    let n_tuples = rng.random_range(0..=max_tuples);
    let mut batch = Vec::with_capacity(n_tuples);
    if total > 0 {
        for _ in 0..n_tuples {
            let mut pick = rng.random_range(0..total);
            let g = weights
                .iter()
                .position(|&w| {
                    if pick < w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .unwrap();
            batch.push(Tuple::new(g as u32, rng.random()));
        }
    }
    Instance::new(lists, batch)
}

/// Per-thread tuple counts by scanning the batch against the thread lists.
pub fn brute_tpt(lists: &[Vec<u32>], batch: &[Tuple]) -> Vec<u64> {
    let mut tpt = vec![0u64; lists.len()];
    for t in batch {
        let owner = lists.iter().position(|l| l.contains(&t.group)).unwrap();
        tpt[owner] += 1;
    }
    tpt
}

pub fn brute_count(batch: &[Tuple], group: u32) -> u64 {
    batch.iter().filter(|t| t.group == group).count() as u64
}

/// Most and least loaded threads (lowest id on ties) if their gap exceeds
/// `threshold`.
pub fn brute_pair(tpt: &[u64], threshold: u64) -> Option<(usize, usize)> {
    let hi = (0..tpt.len()).fold(0, |b, i| if tpt[i] > tpt[b] { i } else { b });
    let lo = (0..tpt.len()).fold(0, |b, i| if tpt[i] < tpt[b] { i } else { b });
    (tpt[hi] - tpt[lo] > threshold).then_some((hi, lo))
}

/// Group checkAll should move first: the donor's most frequent group.
pub fn check_all_oracle(inst: &Instance, threshold: u64) -> Option<u32> {
    let tpt = brute_tpt(&inst.lists, &inst.batch);
    let (hi, _) = brute_pair(&tpt, threshold)?;
    let mut best: Option<(u64, u32)> = None;
    for &g in &inst.lists[hi] {
        let c = brute_count(&inst.batch, g);
        if c == 0 {
            continue;
        }
        best = match best {
            Some((bc, bg)) if bc > c || (bc == c && bg < g) => Some((bc, bg)),
            _ => Some((c, g)),
        };
    }
    best.map(|(_, g)| g)
}

/// Group bestBalance should move first: minimal absolute donor/receiver gap
/// after the move, and only if that strictly narrows the current gap.
pub fn best_balance_oracle(inst: &Instance, threshold: u64) -> Option<u32> {
    let tpt = brute_tpt(&inst.lists, &inst.batch);
    let (hi, lo) = brute_pair(&tpt, threshold)?;
    let (donor, receiver) = (tpt[hi] as i64, tpt[lo] as i64);
    let mut best: Option<(i64, u32)> = None;
    for &g in &inst.lists[hi] {
        let c = brute_count(&inst.batch, g) as i64;
        let gap = ((donor - c) - (receiver + c)).abs();
        best = match best {
            Some((bgap, bg)) if bgap < gap || (bgap == gap && bg < g) => Some((bgap, bg)),
            _ => Some((gap, g)),
        };
    }
    best.filter(|&(gap, _)| gap < donor - receiver)
        .map(|(_, g)| g)
}

/// Checks permutation, contiguity, list order and stability of a reordering.
pub fn check_reorder(inst: &Instance) -> Result<(), String> {
    let r = &inst.reordered;
    let n_threads = inst.lists.len();
    if r.indicator.len() != n_threads + 1 || r.indicator[0] != 0 {
        return Err("indicator shape".into());
    }
    if r.indicator[n_threads] != inst.batch.len() {
        return Err("indicator sentinel".into());
    }
    if r.indicator.windows(2).any(|w| w[0] > w[1]) {
        return Err("indicator decreases".into());
    }
    let mut a: Vec<_> = inst.batch.iter().map(|t| (t.group, t.attr)).collect();
    let mut b: Vec<_> = r.data.iter().map(|t| (t.group, t.attr)).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err("not a permutation".into());
    }
    for (t, list) in inst.lists.iter().enumerate() {
        let seg = &r.data[r.indicator[t]..r.indicator[t + 1]];
        // Groups must appear as contiguous runs, in list order.
        let mut runs: Vec<u32> = Vec::new();
        for tuple in seg {
            if !list.contains(&tuple.group) {
                return Err(format!("group {} in segment of thread {t}", tuple.group));
            }
            if runs.last() != Some(&tuple.group) {
                runs.push(tuple.group);
            }
        }
        let unique: HashSet<_> = runs.iter().collect();
        if unique.len() != runs.len() {
            return Err(format!("split run on thread {t}"));
        }
        let expected: Vec<u32> = list.iter().copied().filter(|g| runs.contains(g)).collect();
        if runs != expected {
            return Err(format!("runs out of list order on thread {t}"));
        }
    }
    let project = |data: &[Tuple]| {
        let mut m: HashMap<u32, Vec<i32>> = HashMap::new();
        for t in data {
            m.entry(t.group).or_default().push(t.attr);
        }
        m
    };
    if project(&inst.batch) != project(&r.data) {
        return Err("unstable".into());
    }
    Ok(())
}

/// Budget, anti-ping-pong, legality, threshold respect and load accounting.
pub fn check_move_list(
    inst: &Instance,
    cfg: &BalancerConfig,
    out: &MoveList,
) -> Result<(), String> {
    let n_threads = inst.lists.len();
    if out.moves.len() > cfg.effective_max_moves(n_threads) {
        return Err(format!("{} moves exceed the budget", out.moves.len()));
    }
    let mut seen = HashSet::new();
    for m in &out.moves {
        if !seen.insert(m.group) {
            return Err(format!("group {} moved twice", m.group));
        }
    }
    let applied = inst
        .assignment
        .apply_moves(&out.moves)
        .map_err(|e| format!("illegal move list: {e}"))?;
    applied.audit().map_err(|e| e.to_string())?;
    let mut tpt = brute_tpt(&inst.lists, &inst.batch);
    let entry_gap = tpt.iter().max().unwrap() - tpt.iter().min().unwrap();
    if entry_gap <= cfg.thread_threshold && !out.moves.is_empty() {
        return Err("moved although balanced".into());
    }
    for m in &out.moves {
        let c = brute_count(&inst.batch, m.group);
        tpt[m.from] -= c;
        tpt[m.to] += c;
    }
    if tpt != out.projected_tpt {
        return Err(format!(
            "projected {:?} != replayed {tpt:?}",
            out.projected_tpt
        ));
    }
    Ok(())
}
