use serde::{Deserialize, Serialize};

use crate::raft::{MessageKind, NodeId, TransitionRecord};
use crate::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    Crashed,
    Partitioned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    Delivered { src: NodeId, dst: NodeId, kind: MessageKind },
    Dropped { src: NodeId, dst: NodeId, kind: MessageKind, reason: DropReason },
    Timer { node: NodeId },
    StaleTimer { node: NodeId },
    TaskArrival { task_id: u64 },
    Crash { node: NodeId },
    Recover { node: NodeId },
    Partition { cut: Vec<(NodeId, NodeId)> },
}

/// One record per processed event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub at: SimTime,
    pub event: TraceEvent,
    pub transitions: Vec<TransitionRecord>,
    /// Log indices committed by a leader while handling this event.
    pub committed: Vec<u64>,
}

/// Receives the trace of a single simulation.
pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) {}
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) {
        self.push(record.clone());
    }
}
