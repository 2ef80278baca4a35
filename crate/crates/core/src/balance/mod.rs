//! Rebalancing policies.
//!
//! Every policy reads the batch statistics of the current iteration and emits
//! group moves that take effect from the next batch. Moves are simulated on a
//! private copy of the assignment and of the per-thread tuple counts, so the
//! emitted list is always legal when applied in order to the input
//! assignment.
//!
//! Within one invocation a group is moved at most once, and at most
//! `max_moves` moves are emitted; together these bound the while-loops of the
//! heap-driven policies, which would otherwise oscillate when one group alone
//! exceeds the threshold.

mod heap;
mod policies;

use std::fmt;
use std::str::FromStr;

pub use heap::LoadIndex;
pub use policies::{
    best_balance, check_all, get_first, no_balance, prob_check, shift, shift_local,
};

use crate::error::{Error, Result};
use crate::partition::{Assignment, BatchStats, Move, ReorderedBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    NoBalance,
    GetFirst,
    CheckAll,
    ProbCheck,
    BestBalance,
    Shift,
    ShiftLocal,
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::NoBalance,
        Policy::GetFirst,
        Policy::CheckAll,
        Policy::ProbCheck,
        Policy::BestBalance,
        Policy::Shift,
        Policy::ShiftLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::NoBalance => "no_balance",
            Policy::GetFirst => "get_first",
            Policy::CheckAll => "check_all",
            Policy::ProbCheck => "prob_check",
            Policy::BestBalance => "best_balance",
            Policy::Shift => "shift",
            Policy::ShiftLocal => "shift_local",
        }
    }

    /// Short command-line name.
    pub fn short_name(self) -> &'static str {
        match self {
            Policy::NoBalance => "no",
            Policy::GetFirst => "first",
            Policy::CheckAll => "all",
            Policy::ProbCheck => "prob",
            Policy::BestBalance => "best",
            Policy::Shift => "shift",
            Policy::ShiftLocal => "shiftlocal",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.short_name() == s || p.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown policy '{s}' (expected one of no, first, all, prob, best, shift, shiftlocal)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalancerConfig {
    pub policy: Policy,
    /// Tuple-count gap between the most and least loaded thread above which
    /// the policy acts.
    pub thread_threshold: u64,
    /// Fraction of the donor's mean group size used as the probCheck scan limit.
    pub pot: f64,
    /// Cap on moves per invocation; `None` means four per thread.
    pub max_moves: Option<usize>,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self {
            policy: Policy::NoBalance,
            thread_threshold: 1000,
            pot: 0.5,
            max_moves: None,
        }
    }
}

impl BalancerConfig {
    pub fn new(policy: Policy, thread_threshold: u64) -> Self {
        Self {
            policy,
            thread_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thread_threshold < 1 {
            return Err(Error::InvalidConfig(
                "thread threshold must be at least 1".into(),
            ));
        }
        if !(self.pot > 0.0 && self.pot <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "pot must lie in (0, 1], got {}",
                self.pot
            )));
        }
        if self.max_moves == Some(0) {
            return Err(Error::InvalidConfig("max_moves must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_max_moves(&self, n_threads: usize) -> usize {
        self.max_moves.unwrap_or(4 * n_threads).max(1)
    }
}

/// Output of one policy invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoveList {
    pub moves: Vec<Move>,
    /// Batch tuples re-read by the policy to choose its groups.
    pub scanned_tuples: u64,
    /// Per-thread tuple counts after simulating every emitted move.
    pub projected_tpt: Vec<u64>,
}

impl MoveList {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Runs the policy selected in `cfg`.
pub fn rebalance(
    stats: &BatchStats,
    assignment: &Assignment,
    reordered: &ReorderedBatch,
    cfg: &BalancerConfig,
) -> Result<MoveList> {
    let f = match cfg.policy {
        Policy::NoBalance => no_balance,
        Policy::GetFirst => get_first,
        Policy::CheckAll => check_all,
        Policy::ProbCheck => prob_check,
        Policy::BestBalance => best_balance,
        Policy::Shift => shift,
        Policy::ShiftLocal => shift_local,
    };
    f(stats, assignment, reordered, cfg)
}
