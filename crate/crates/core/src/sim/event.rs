use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::raft::{BlockPayload, Message, NodeId};
use crate::SimTime;

use super::fault::Link;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Deliver(Message),
    /// Fires if the node's deadline is still `deadline` when popped.
    Timeout { node: NodeId, deadline: SimTime },
    TaskArrival(BlockPayload),
    Crash(NodeId),
    Recover(NodeId),
    /// Replaces the set of cut links; empty heals everything.
    PartitionChange(BTreeSet<Link>),
}

#[derive(Debug, Clone)]
pub struct Event {
    pub at: SimTime,
    /// Insertion counter; breaks ties between events at the same instant.
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the earliest (at, seq) first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}
