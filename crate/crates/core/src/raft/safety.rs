//! Trace-level checks of the Raft safety properties.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::{LogEntry, NodeId, Term};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// Two nodes led the same term.
    ElectionSafety { term: Term, first: NodeId, second: NodeId, at: SimTime },
    /// Two logs agree at `index` but differ somewhere before it.
    LogMatching { a: NodeId, b: NodeId, index: u64, at: SimTime },
    /// A new leader is missing an entry committed in an earlier term.
    LeaderCompleteness { leader: NodeId, term: Term, missing_index: u64, at: SimTime },
    /// Two different entries were applied at the same index.
    StateMachineSafety { index: u64, first: NodeId, second: NodeId, at: SimTime },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ElectionSafety { term, first, second, at } => {
                write!(f, "election safety: {first} and {second} both led {term} (at {at})")
            }
            Violation::LogMatching { a, b, index, at } => {
                write!(f, "log matching: {a} and {b} share entry {index} but diverge before it (at {at})")
            }
            Violation::LeaderCompleteness { leader, term, missing_index, at } => write!(
                f,
                "leader completeness: {leader} leads {term} without committed entry {missing_index} (at {at})"
            ),
            Violation::StateMachineSafety { index, first, second, at } => {
                write!(f, "state machine safety: {first} and {second} applied different entries at {index} (at {at})")
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Committed {
    entry: LogEntry,
    /// Term of the leader that first declared it committed.
    commit_term: Term,
}

/// Accumulates observations from a run and records every violation seen.
#[derive(Debug, Clone, Default)]
pub struct SafetyMonitor {
    leaders: BTreeMap<Term, NodeId>,
    committed: BTreeMap<u64, Committed>,
    applied: BTreeMap<u64, (NodeId, LogEntry)>,
    violations: Vec<Violation>,
}

impl SafetyMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Call whenever `node` becomes leader of `term`, with its log at that instant.
    pub fn observe_leader(&mut self, node: NodeId, term: Term, log: &[LogEntry], at: SimTime) {
        match self.leaders.get(&term) {
            Some(&prev) if prev != node => {
                self.violations.push(Violation::ElectionSafety { term, first: prev, second: node, at });
            }
            Some(_) => {}
            None => {
                self.leaders.insert(term, node);
            }
        }
        for (&index, c) in &self.committed {
            if c.commit_term >= term {
                continue;
            }
            if log.get(index as usize - 1) != Some(&c.entry) {
                self.violations.push(Violation::LeaderCompleteness { leader: node, term, missing_index: index, at });
                break;
            }
        }
    }

    /// Call when `leader` (in `term`) advances its commit index; `entries`
    /// are the newly committed ones.
    pub fn observe_commit(&mut self, term: Term, entries: &[LogEntry]) {
        for e in entries {
            self.committed
                .entry(e.index)
                .or_insert_with(|| Committed { entry: e.clone(), commit_term: term });
        }
    }

    pub fn observe_apply(&mut self, node: NodeId, entry: &LogEntry, at: SimTime) {
        match self.applied.get(&entry.index) {
            Some((first, prev)) if prev != entry => {
                let first = *first;
                self.violations.push(Violation::StateMachineSafety { index: entry.index, first, second: node, at });
            }
            Some(_) => {}
            None => {
                self.applied.insert(entry.index, (node, entry.clone()));
            }
        }
    }

    /// Pairwise log-matching check over a snapshot of all logs.
    pub fn check_logs(&mut self, logs: &[(NodeId, &[LogEntry])], at: SimTime) {
        for (i, &(a, la)) in logs.iter().enumerate() {
            for &(b, lb) in &logs[i + 1..] {
                if let Some(index) = log_matching_violation(la, lb) {
                    self.violations.push(Violation::LogMatching { a, b, index, at });
                }
            }
        }
    }
}

/// Returns the highest index at which both logs hold the same term while
/// some earlier entry differs, if any.
pub fn log_matching_violation(a: &[LogEntry], b: &[LogEntry]) -> Option<u64> {
    let common = a.len().min(b.len());
    // Scan from the top; the first agreeing index must have identical prefixes.
    let top = (0..common).rev().find(|&i| a[i].term == b[i].term)?;
    if a[..=top] == b[..=top] {
        None
    } else {
        Some(top as u64 + 1)
    }
}
