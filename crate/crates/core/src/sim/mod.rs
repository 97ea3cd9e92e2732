//! Seeded discrete-event simulation of one edge cluster.
//!
//! The simulator owns the event queue, the wire, the cloud task source and
//! fault injection. Message delays come from the latency model: a message of
//! `size` bits over link (a, b) takes `size / R(a, b)` seconds, and a task
//! migrated from the cloud to a leader holding `q` queued tasks takes the
//! migration latency of `q` tasks.

pub mod campaign;
mod config;
mod event;
mod fault;
mod trace;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{
    self, ClusterGeometry, LatencyBreakdown, LatencyError, LatencyParams, NodeResources, RoundInput, Shadowing,
};
use crate::raft::{
    BlockPayload, LogEntry, Message, MessageBody, MessageKind, NodeId, RaftNode, Role, SafetyMonitor, TaskOutcome,
    Term, TransitionRecord,
};
use crate::SimTime;

pub use config::{ClusterConfig, TopologyRanges};
pub use event::{Event, EventKind};
pub use fault::{Fault, FaultDirective, FaultSchedule, Link};
pub use trace::{DropReason, NullSink, TraceEvent, TraceRecord, TraceSink};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("watchdog: {events} events processed without reaching the stop condition")]
    Watchdog { events: u64 },
    #[error("fault directive at {at} is in the past (now {now})")]
    InPast { at: SimTime, now: SimTime },
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

/// A block committed by a leader, with its latency accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub index: u64,
    pub term: Term,
    pub leader: NodeId,
    pub task_id: u64,
    pub tx_count: u32,
    pub committed_at: SimTime,
    /// Tasks queued at the leader when this task was migrated to it.
    pub queue_len: usize,
    pub breakdown: LatencyBreakdown<f64>,
}

/// Cumulative counters since the simulation was created.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub now: SimTime,
    pub events: u64,
    /// Candidacies started (each is one election round).
    pub elections: u64,
    pub leaders_elected: u64,
    /// Highest term reached by any node.
    pub max_term: u64,
    pub blocks_committed: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    /// Events other than messages discarded because their node was down.
    pub events_dropped: u64,
    pub latency: LatencyBreakdown<f64>,
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NodeSnapshot {
    role: Role,
    term: Term,
    commit: u64,
}

/// A single cluster under simulation.
pub struct ClusterSim<S: TraceSink = NullSink> {
    config: ClusterConfig,
    now: SimTime,
    nodes: Vec<RaftNode>,
    alive: Vec<bool>,
    geometry: ClusterGeometry<f64>,
    resources: Vec<NodeResources<f64>>,
    shadowing: Shadowing<f64>,
    queue: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    cut: BTreeSet<Link>,
    scheduled_timer: Vec<Option<SimTime>>,
    cloud_backlog: VecDeque<BlockPayload>,
    dispatch_queue_len: BTreeMap<u64, usize>,
    next_task_id: u64,
    monitor: SafetyMonitor,
    commits: Vec<CommitRecord>,
    stats: RunSummary,
    sink: S,
}

impl ClusterSim<NullSink> {
    pub fn new(config: ClusterConfig, seed: u64) -> Result<Self, SimError> {
        Self::with_sink(config, seed, NullSink)
    }
}

impl<S: TraceSink> ClusterSim<S> {
    pub fn with_sink(config: ClusterConfig, seed: u64, sink: S) -> Result<Self, SimError> {
        let geometry = config.validate()?;
        let n = config.cluster_size();
        let raft = config.raft_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = (0..n).map(|i| RaftNode::new(NodeId(i), &raft, SimTime::ZERO, &mut rng)).collect();
        let resources = config.cycles_per_sec.iter().map(|&c| NodeResources::new(c)).collect();
        let mut sim = ClusterSim {
            now: SimTime::ZERO,
            nodes,
            alive: vec![true; n],
            geometry,
            resources,
            shadowing: Shadowing::none(n),
            queue: BinaryHeap::new(),
            seq: 0,
            rng,
            cut: BTreeSet::new(),
            scheduled_timer: vec![None; n],
            cloud_backlog: VecDeque::new(),
            dispatch_queue_len: BTreeMap::new(),
            next_task_id: 0,
            monitor: SafetyMonitor::new(),
            commits: Vec::new(),
            stats: RunSummary::default(),
            sink,
            config,
        };
        sim.draw_shadowing();
        for i in 0..n {
            sim.reschedule_timer(i);
        }
        sim.schedule_next_arrival();
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }
    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }
    pub fn nodes(&self) -> &[RaftNode] {
        &self.nodes
    }
    pub fn node(&self, id: NodeId) -> &RaftNode {
        &self.nodes[id.0]
    }
    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id.0]
    }
    pub fn geometry(&self) -> &ClusterGeometry<f64> {
        &self.geometry
    }
    pub fn params(&self) -> &LatencyParams<f64> {
        &self.config.latency
    }
    pub fn resources(&self) -> &[NodeResources<f64>] {
        &self.resources
    }
    pub fn shadowing(&self) -> &Shadowing<f64> {
        &self.shadowing
    }
    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }
    pub fn monitor(&self) -> &SafetyMonitor {
        &self.monitor
    }
    pub fn sink(&self) -> &S {
        &self.sink
    }
    pub fn into_sink(self) -> S {
        self.sink
    }
    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            now: self.now,
            max_term: self.nodes.iter().map(|n| n.current_term().0).max().unwrap_or(0),
            violations: self.monitor.violations().len(),
            ..self.stats.clone()
        }
    }

    /// The live leader with the highest term, if any.
    pub fn leader(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter(|n| self.alive[n.id().0] && n.role() == Role::Leader)
            .max_by_key(|n| n.current_term())
            .map(|n| n.id())
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { at, seq: self.seq, kind });
    }

    /// Redraws the per-link shadowing factors for a new round.
    pub fn draw_shadowing(&mut self) {
        let n = self.nodes.len();
        let sigma = self.config.latency.shadowing_sigma;
        self.shadowing = if sigma == 0.0 {
            Shadowing::none(n)
        } else {
            let dist = LogNormal::new(0.0, sigma).expect("validated sigma");
            let rng = &mut self.rng;
            Shadowing::from_fn(n, |_, _| dist.sample(rng))
        };
    }

    fn schedule_next_arrival(&mut self) {
        if self.config.task_rate > 0.0 {
            let gap = Exp::new(self.config.task_rate).expect("validated rate").sample(&mut self.rng);
            let task = BlockPayload {
                task_id: self.next_task_id,
                tx_count: self.config.tx_per_block,
                tx_batch_bytes: self.config.latency.bytes_per_task as u64,
            };
            self.next_task_id += 1;
            self.push(self.now + SimTime::from_secs_f64(gap), EventKind::TaskArrival(task));
        }
    }

    fn reschedule_timer(&mut self, i: usize) {
        let deadline = self.nodes[i].next_deadline();
        if self.scheduled_timer[i] != Some(deadline) {
            self.scheduled_timer[i] = Some(deadline);
            let at = deadline.max(self.now);
            self.push(at, EventKind::Timeout { node: NodeId(i), deadline });
        }
    }

    /// Wire delay of `msg` from its link rate; cloud tasks are handled separately.
    pub fn transport_delay(&self, msg: &Message) -> Result<SimTime, SimError> {
        let p = &self.config.latency;
        let bits = match msg.body.kind() {
            MessageKind::RequestVotes | MessageKind::AppendEntries => p.append_entries_bits,
            MessageKind::RequestVotesReply | MessageKind::AppendEntriesReply => p.confirmation_bits,
            MessageKind::ClientTask => return Ok(SimTime::ZERO),
        };
        let rate = latency::link_rate(msg.src, msg.dst, &self.geometry, p, self.shadowing.factor(msg.src, msg.dst))?;
        Ok(SimTime::from_secs_f64(bits / rate))
    }

    fn send_all(&mut self, msgs: Vec<Message>) -> Result<(), SimError> {
        for msg in msgs {
            let delay = self.transport_delay(&msg)?;
            self.stats.messages_sent += 1;
            self.push(self.now + delay, EventKind::Deliver(msg));
        }
        Ok(())
    }

    /// Migrates every backlogged cloud task to the current leader.
    fn dispatch_backlog(&mut self) {
        let Some(leader) = self.leader() else { return };
        while let Some(task) = self.cloud_backlog.pop_front() {
            let q = &mut self.resources[leader.0].queue;
            q.push_back(task);
            let queue_len = q.len();
            self.dispatch_queue_len.insert(task.task_id, queue_len);
            let delay = latency::migration_latency(queue_len, &self.config.latency);
            let msg = Message::new(NodeId::CLOUD, leader, MessageBody::ClientTask { payload: task });
            self.stats.messages_sent += 1;
            self.push(self.now + SimTime::from_secs_f64(delay), EventKind::Deliver(msg));
        }
    }

    fn snapshot(&self, i: usize) -> NodeSnapshot {
        let n = &self.nodes[i];
        NodeSnapshot { role: n.role(), term: n.current_term(), commit: n.commit_index() }
    }

    /// Bookkeeping after node `i` handled an event.
    fn settle(&mut self, i: usize, before: NodeSnapshot, record: &mut TraceRecord) -> Result<(), SimError> {
        let after = self.snapshot(i);
        let id = NodeId(i);
        if after != before {
            record.transitions.push(TransitionRecord {
                node: id,
                at: self.now,
                old_role: before.role,
                new_role: after.role,
                term: after.term,
                commit_index: after.commit,
            });
        }
        if after.role == Role::Candidate && (before.role != Role::Candidate || before.term != after.term) {
            self.stats.elections += 1;
        }
        if before.role == Role::Leader && after.role != Role::Leader {
            self.resources[i].queue.clear();
        }
        if after.role == Role::Leader && (before.role != Role::Leader || before.term != after.term) {
            self.stats.leaders_elected += 1;
            self.monitor.observe_leader(id, after.term, self.nodes[i].log(), self.now);
        }
        if after.role == Role::Leader && after.commit > before.commit {
            self.account_commits(i, before.commit, after.commit, record)?;
        }
        for entry in self.nodes[i].take_applied() {
            self.monitor.observe_apply(id, &entry, self.now);
        }
        self.reschedule_timer(i);
        if after.role == Role::Leader && !self.cloud_backlog.is_empty() {
            self.dispatch_backlog();
        }
        Ok(())
    }

    fn account_commits(&mut self, i: usize, from: u64, to: u64, record: &mut TraceRecord) -> Result<(), SimError> {
        let leader = NodeId(i);
        let term = self.nodes[i].current_term();
        let entries: Vec<LogEntry> = self.nodes[i].log()[from as usize..to as usize].to_vec();
        self.monitor.observe_commit(term, &entries);
        for e in &entries {
            let queue_len = self.dispatch_queue_len.remove(&e.block.task_id).unwrap_or(0);
            let breakdown = latency::round_latency(
                RoundInput { leader, queue_len, tx_count: e.block.tx_count },
                &self.resources,
                &self.geometry,
                &self.config.latency,
                &self.shadowing,
            )?;
            self.resources[i].queue.retain(|t| t.task_id != e.block.task_id);
            self.stats.blocks_committed += 1;
            self.stats.latency = self.stats.latency + breakdown;
            record.committed.push(e.index);
            self.commits.push(CommitRecord {
                index: e.index,
                term: e.term,
                leader,
                task_id: e.block.task_id,
                tx_count: e.block.tx_count,
                committed_at: self.now,
                queue_len,
                breakdown,
            });
        }
        let logs: Vec<(NodeId, &[LogEntry])> = self.nodes.iter().map(|n| (n.id(), n.log())).collect();
        let now = self.now;
        self.monitor.check_logs(&logs, now);
        Ok(())
    }

    /// Processes the earliest pending event. `None` once the queue is empty.
    pub fn step(&mut self) -> Result<Option<TraceRecord>, SimError> {
        let Some(Event { at, seq, kind }) = self.queue.pop() else {
            return Ok(None);
        };
        debug_assert!(at >= self.now, "time went backwards");
        self.now = at;
        self.stats.events += 1;
        let mut record = TraceRecord {
            seq,
            at,
            event: TraceEvent::StaleTimer { node: NodeId(0) },
            transitions: Vec::new(),
            committed: Vec::new(),
        };
        match kind {
            EventKind::Deliver(msg) => self.deliver(msg, &mut record)?,
            EventKind::Timeout { node, deadline } => {
                let i = node.0;
                if self.scheduled_timer[i] == Some(deadline) {
                    self.scheduled_timer[i] = None;
                }
                if !self.alive[i] {
                    self.stats.events_dropped += 1;
                    record.event = TraceEvent::StaleTimer { node };
                } else if self.nodes[i].next_deadline() != deadline {
                    record.event = TraceEvent::StaleTimer { node };
                } else {
                    record.event = TraceEvent::Timer { node };
                    let before = self.snapshot(i);
                    let out = self.nodes[i].on_timer(self.now, &mut self.rng);
                    self.send_all(out)?;
                    self.settle(i, before, &mut record)?;
                }
            }
            EventKind::TaskArrival(task) => {
                record.event = TraceEvent::TaskArrival { task_id: task.task_id };
                self.cloud_backlog.push_back(task);
                self.dispatch_backlog();
                self.schedule_next_arrival();
            }
            EventKind::Crash(node) => {
                record.event = TraceEvent::Crash { node };
                if self.alive[node.0] {
                    self.alive[node.0] = false;
                    self.resources[node.0].queue.clear();
                }
            }
            EventKind::Recover(node) => {
                record.event = TraceEvent::Recover { node };
                let i = node.0;
                if self.alive[i] {
                    warn!("recover of live node {node} at {} ignored", self.now);
                } else {
                    self.alive[i] = true;
                    let before = self.snapshot(i);
                    self.nodes[i].recover(self.now, &mut self.rng);
                    self.settle(i, before, &mut record)?;
                }
            }
            EventKind::PartitionChange(cut) => {
                record.event = TraceEvent::Partition { cut: cut.iter().map(|l| (l.0, l.1)).collect() };
                self.cut = cut;
            }
        }
        self.sink.record(&record);
        Ok(Some(record))
    }

    fn deliver(&mut self, msg: Message, record: &mut TraceRecord) -> Result<(), SimError> {
        let (src, dst, kind) = (msg.src, msg.dst, msg.body.kind());
        let i = dst.0;
        let reason = if !self.alive[i] {
            Some(DropReason::Crashed)
        } else if src != NodeId::CLOUD && self.cut.contains(&Link::new(src, dst)) {
            Some(DropReason::Partitioned)
        } else {
            None
        };
        if let Some(reason) = reason {
            self.stats.messages_dropped += 1;
            record.event = TraceEvent::Dropped { src, dst, kind, reason };
            if let MessageBody::ClientTask { payload } = msg.body {
                self.requeue(i, payload);
            }
            return Ok(());
        }
        record.event = TraceEvent::Delivered { src, dst, kind };
        let before = self.snapshot(i);
        let (out, outcome) = self.nodes[i].handle(msg.clone(), self.now, &mut self.rng);
        if let (Some(TaskOutcome::Redirect(_)), MessageBody::ClientTask { payload }) = (outcome, &msg.body) {
            self.requeue(i, *payload);
        }
        self.send_all(out)?;
        self.settle(i, before, record)
    }

    /// Returns an undeliverable task to the cloud, which retries at the leader.
    fn requeue(&mut self, node: usize, task: BlockPayload) {
        self.resources[node].queue.retain(|t| t.task_id != task.task_id);
        self.dispatch_queue_len.remove(&task.task_id);
        self.cloud_backlog.push_back(task);
        self.dispatch_backlog();
    }

    /// Schedules a fault. Directives must not lie in the past.
    pub fn inject(&mut self, directive: &FaultDirective) -> Result<(), SimError> {
        let at = directive.at();
        if at < self.now {
            return Err(SimError::InPast { at, now: self.now });
        }
        let n = self.nodes.len();
        let check = |node: usize| {
            if node < n {
                Ok(NodeId(node))
            } else {
                Err(SimError::Config { field: "faults".into(), reason: format!("node {node} outside cluster of {n}") })
            }
        };
        let kind = match &directive.fault {
            Fault::Crash { node } => EventKind::Crash(check(*node)?),
            Fault::Recover { node } => EventKind::Recover(check(*node)?),
            Fault::Partition { links } => {
                for &[a, b] in links {
                    check(a)?;
                    check(b)?;
                }
                EventKind::PartitionChange(Fault::cut_set(links))
            }
        };
        self.push(at, kind);
        Ok(())
    }

    /// Schedules every directive, shifted by `offset`.
    pub fn inject_schedule(&mut self, schedule: &FaultSchedule, offset: SimTime) -> Result<(), SimError> {
        for d in &schedule.directives {
            let shifted = FaultDirective { at_ms: d.at_ms + offset.as_micros() / 1_000, fault: d.fault.clone() };
            self.inject(&shifted)?;
        }
        Ok(())
    }

    /// Steps until `stop` holds, the queue drains, or the watchdog trips.
    pub fn run_until(&mut self, mut stop: impl FnMut(&Self) -> bool) -> Result<RunSummary, SimError> {
        let mut processed = 0u64;
        while !stop(self) {
            if processed >= self.config.max_events {
                return Err(SimError::Watchdog { events: processed });
            }
            if self.step()?.is_none() {
                break;
            }
            processed += 1;
        }
        Ok(self.summary())
    }

    /// Processes every event up to and including `t`, then advances the clock to `t`.
    pub fn run_until_time(&mut self, t: SimTime) -> Result<RunSummary, SimError> {
        let mut processed = 0u64;
        while self.queue.peek().is_some_and(|e| e.at <= t) {
            if processed >= self.config.max_events {
                return Err(SimError::Watchdog { events: processed });
            }
            self.step()?;
            processed += 1;
        }
        self.now = self.now.max(t);
        Ok(self.summary())
    }

    /// Applies per-node election windows, deposes the current leader and
    /// restarts every live node's election timer, so the next leader is
    /// decided by the new windows.
    pub fn start_leadership_round(&mut self, windows: &[(SimTime, SimTime)]) -> Result<(), SimError> {
        if windows.len() != self.nodes.len() {
            return Err(SimError::Config {
                field: "windows".into(),
                reason: format!("{} windows for {} nodes", windows.len(), self.nodes.len()),
            });
        }
        self.draw_shadowing();
        for i in 0..self.nodes.len() {
            let (lo, hi) = windows[i];
            self.nodes[i].set_election_window(lo, hi);
            if !self.alive[i] {
                continue;
            }
            let before = self.snapshot(i);
            let mut record = TraceRecord {
                seq: 0,
                at: self.now,
                event: TraceEvent::Timer { node: NodeId(i) },
                transitions: Vec::new(),
                committed: Vec::new(),
            };
            self.nodes[i].step_down(self.now, &mut self.rng);
            self.nodes[i].reset_election_timer(self.now, &mut self.rng);
            self.settle(i, before, &mut record)?;
            if !record.transitions.is_empty() {
                self.sink.record(&record);
            }
        }
        Ok(())
    }

    /// Final cross-node log check; call at the end of a run.
    pub fn check_logs(&mut self) {
        let logs: Vec<(NodeId, &[LogEntry])> = self.nodes.iter().map(|n| (n.id(), n.log())).collect();
        let now = self.now;
        self.monitor.check_logs(&logs, now);
    }
}
