use std::collections::BTreeSet;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::*;
use crate::SimTime;

/// Per-cluster protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftConfig {
    pub cluster_size: usize,
    pub election_timeout_min: SimTime,
    pub election_timeout_max: SimTime,
    pub heartbeat_interval: SimTime,
    pub commit_rule: CommitRule,
    /// Cap on entries carried by a single AppendEntries.
    pub max_entries_per_append: usize,
}

impl RaftConfig {
    /// Defaults: timeouts uniform in [150, 300] ms, heartbeat every T_min / 3.
    pub fn new(cluster_size: usize) -> Self {
        let min = SimTime::from_millis(150);
        RaftConfig {
            cluster_size,
            election_timeout_min: min,
            election_timeout_max: SimTime::from_millis(300),
            heartbeat_interval: SimTime(min.0 / 3),
            commit_rule: CommitRule::CurrentTermQuorum,
            max_entries_per_append: 64,
        }
    }

    /// Strict majority, counting the leader itself.
    pub fn quorum(&self) -> usize {
        self.cluster_size / 2 + 1
    }
}

/// One edge node's complete Raft state.
///
/// Every handler maps `(state, input) -> (state', messages)`; wall-clock time
/// and randomness are supplied by the caller so that runs are replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftNode {
    id: NodeId,
    cluster_size: usize,
    role: Role,
    current_term: Term,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry>,
    commit_index: u64,
    last_applied: u64,
    next_index: Vec<u64>,
    match_index: Vec<u64>,
    election_deadline: SimTime,
    heartbeat_due: SimTime,
    votes_received: BTreeSet<NodeId>,
    known_leader: Option<NodeId>,
    /// Inclusive window the next election timeout is drawn from.
    election_window: (SimTime, SimTime),
    heartbeat_interval: SimTime,
    commit_rule: CommitRule,
    max_entries_per_append: usize,
}

impl RaftNode {
    pub fn new<R: Rng + ?Sized>(id: NodeId, config: &RaftConfig, now: SimTime, rng: &mut R) -> Self {
        assert!(id.0 < config.cluster_size, "{id} outside cluster of {}", config.cluster_size);
        let mut node = RaftNode {
            id,
            cluster_size: config.cluster_size,
            role: Role::Follower,
            current_term: Term(0),
            voted_for: None,
            log: Vec::new(),
            commit_index: 0,
            last_applied: 0,
            next_index: vec![1; config.cluster_size],
            match_index: vec![0; config.cluster_size],
            election_deadline: SimTime::ZERO,
            heartbeat_due: SimTime::ZERO,
            votes_received: BTreeSet::new(),
            known_leader: None,
            election_window: (config.election_timeout_min, config.election_timeout_max),
            heartbeat_interval: config.heartbeat_interval,
            commit_rule: config.commit_rule,
            max_entries_per_append: config.max_entries_per_append.max(1),
        };
        node.reset_election_timer(now, rng);
        node
    }

    pub fn id(&self) -> NodeId {
        self.id
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn current_term(&self) -> Term {
        self.current_term
    }
    pub fn voted_for(&self) -> Option<NodeId> {
        self.voted_for
    }
    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }
    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }
    pub fn last_applied(&self) -> u64 {
        self.last_applied
    }
    pub fn next_index(&self, peer: NodeId) -> u64 {
        self.next_index[peer.0]
    }
    pub fn match_index(&self, peer: NodeId) -> u64 {
        self.match_index[peer.0]
    }
    pub fn election_deadline(&self) -> SimTime {
        self.election_deadline
    }
    pub fn votes_received(&self) -> &BTreeSet<NodeId> {
        &self.votes_received
    }
    pub fn known_leader(&self) -> Option<NodeId> {
        self.known_leader
    }
    pub fn election_window(&self) -> (SimTime, SimTime) {
        self.election_window
    }

    pub fn last_log_index(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn last_log_term(&self) -> Term {
        self.log.last().map_or(Term(0), |e| e.term)
    }

    /// Term of the entry at `index`; index 0 is the empty prefix with term 0.
    pub fn term_at(&self, index: u64) -> Option<Term> {
        match index {
            0 => Some(Term(0)),
            i => self.log.get(i as usize - 1).map(|e| e.term),
        }
    }

    fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.cluster_size).map(NodeId).filter(move |p| *p != self.id)
    }

    fn quorum(&self) -> usize {
        self.cluster_size / 2 + 1
    }

    /// Instant of the next timer this node wants to fire.
    pub fn next_deadline(&self) -> SimTime {
        match self.role {
            Role::Leader => self.heartbeat_due,
            _ => self.election_deadline,
        }
    }

    /// Restricts the window future election timeouts are drawn from.
    pub fn set_election_window(&mut self, lo: SimTime, hi: SimTime) {
        assert!(lo <= hi, "empty election window {lo}..{hi}");
        self.election_window = (lo, hi);
    }

    pub fn reset_election_timer<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) {
        let (lo, hi) = self.election_window;
        self.election_deadline = now + SimTime(rng.random_range(lo.0..=hi.0));
    }

    /// Adopts a newer term and falls back to follower.
    fn observe_term<R: Rng + ?Sized>(&mut self, term: Term, now: SimTime, rng: &mut R) {
        if term > self.current_term {
            let was_leader = self.role == Role::Leader;
            self.current_term = term;
            self.voted_for = None;
            self.known_leader = None;
            self.role = Role::Follower;
            self.votes_received.clear();
            if was_leader {
                self.reset_election_timer(now, rng);
            }
        }
    }

    /// Dispatches whichever timer is due.
    pub fn on_timer<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Vec<Message> {
        match self.role {
            Role::Leader => self.on_heartbeat_timeout(now),
            _ => self.on_election_timeout(now, rng),
        }
    }

    /// Starts (or restarts, after a split vote) an election.
    pub fn on_election_timeout<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Vec<Message> {
        if self.role == Role::Leader || now < self.election_deadline {
            return Vec::new();
        }
        self.role = Role::Candidate;
        self.current_term = self.current_term.next();
        self.voted_for = Some(self.id);
        self.known_leader = None;
        self.votes_received.clear();
        self.votes_received.insert(self.id);
        self.reset_election_timer(now, rng);

        if self.votes_received.len() >= self.quorum() {
            return self.become_leader(now);
        }
        let body = MessageBody::RequestVotes {
            term: self.current_term,
            candidate_id: self.id,
            last_log_index: self.last_log_index(),
            last_log_term: self.last_log_term(),
        };
        self.peers().map(|p| Message::new(self.id, p, body.clone())).collect()
    }

    pub fn on_heartbeat_timeout(&mut self, now: SimTime) -> Vec<Message> {
        if self.role != Role::Leader || now < self.heartbeat_due {
            return Vec::new();
        }
        self.broadcast_append(now)
    }

    fn become_leader(&mut self, now: SimTime) -> Vec<Message> {
        self.role = Role::Leader;
        self.known_leader = Some(self.id);
        self.votes_received.clear();
        let next = self.last_log_index() + 1;
        self.next_index.iter_mut().for_each(|n| *n = next);
        self.match_index.iter_mut().for_each(|m| *m = 0);
        self.match_index[self.id.0] = self.last_log_index();
        self.broadcast_append(now)
    }

    fn broadcast_append(&mut self, now: SimTime) -> Vec<Message> {
        self.heartbeat_due = now + self.heartbeat_interval;
        let peers: Vec<NodeId> = self.peers().collect();
        peers.into_iter().map(|p| self.append_for(p)).collect()
    }

    fn append_for(&self, peer: NodeId) -> Message {
        let next = self.next_index[peer.0].clamp(1, self.last_log_index() + 1);
        let prev_log_index = next - 1;
        let prev_log_term = self.term_at(prev_log_index).expect("prev index within log");
        let end = (self.log.len()).min(prev_log_index as usize + self.max_entries_per_append);
        let entries = self.log[prev_log_index as usize..end].to_vec();
        Message::new(
            self.id,
            peer,
            MessageBody::AppendEntries {
                term: self.current_term,
                leader_id: self.id,
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit: self.commit_index,
            },
        )
    }

    /// Routes any inbound message to its handler.
    pub fn handle<R: Rng + ?Sized>(&mut self, msg: Message, now: SimTime, rng: &mut R) -> (Vec<Message>, Option<TaskOutcome>) {
        debug_assert_eq!(msg.dst, self.id);
        match msg.body {
            MessageBody::RequestVotes { .. } => (vec![self.handle_request_votes(&msg, now, rng)], None),
            MessageBody::RequestVotesReply { .. } => (self.handle_request_votes_reply(&msg, now, rng), None),
            MessageBody::AppendEntries { .. } => (vec![self.handle_append_entries(&msg, now, rng)], None),
            MessageBody::AppendEntriesReply { .. } => (self.handle_append_entries_reply(&msg, now, rng), None),
            MessageBody::ClientTask { payload } => {
                let (out, outcome) = self.handle_client_task(payload);
                (out, Some(outcome))
            }
        }
    }

    pub fn handle_request_votes<R: Rng + ?Sized>(&mut self, msg: &Message, now: SimTime, rng: &mut R) -> Message {
        let MessageBody::RequestVotes { term, candidate_id, last_log_index, last_log_term } = msg.body else {
            panic!("handle_request_votes given {:?}", msg.body.kind());
        };
        self.observe_term(term, now, rng);

        let up_to_date = (last_log_term, last_log_index) >= (self.last_log_term(), self.last_log_index());
        let free = self.voted_for.is_none() || self.voted_for == Some(candidate_id);
        let grant = term == self.current_term && free && up_to_date;
        if grant {
            self.voted_for = Some(candidate_id);
            self.reset_election_timer(now, rng);
        }
        Message::new(
            self.id,
            msg.src,
            MessageBody::RequestVotesReply { term: self.current_term, vote_granted: grant },
        )
    }

    pub fn handle_request_votes_reply<R: Rng + ?Sized>(&mut self, msg: &Message, now: SimTime, rng: &mut R) -> Vec<Message> {
        let MessageBody::RequestVotesReply { term, vote_granted } = msg.body else {
            panic!("handle_request_votes_reply given {:?}", msg.body.kind());
        };
        self.observe_term(term, now, rng);
        if self.role != Role::Candidate || term != self.current_term || !vote_granted {
            return Vec::new();
        }
        self.votes_received.insert(msg.src);
        if self.votes_received.len() >= self.quorum() {
            self.become_leader(now)
        } else {
            Vec::new()
        }
    }

    pub fn handle_append_entries<R: Rng + ?Sized>(&mut self, msg: &Message, now: SimTime, rng: &mut R) -> Message {
        let MessageBody::AppendEntries { term, leader_id, prev_log_index, prev_log_term, ref entries, leader_commit } =
            msg.body
        else {
            panic!("handle_append_entries given {:?}", msg.body.kind());
        };
        let reply = |node: &Self, success, match_hint| {
            Message::new(
                node.id,
                msg.src,
                MessageBody::AppendEntriesReply { term: node.current_term, success, match_hint },
            )
        };
        if term < self.current_term {
            return reply(self, false, 0);
        }
        self.observe_term(term, now, rng);
        // Same term: a candidate concedes, a follower stays.
        self.role = Role::Follower;
        self.votes_received.clear();
        self.known_leader = Some(leader_id);
        self.reset_election_timer(now, rng);

        if self.term_at(prev_log_index) != Some(prev_log_term) {
            return reply(self, false, 0);
        }
        for entry in entries {
            match self.term_at(entry.index) {
                Some(t) if t == entry.term => {}
                Some(_) => {
                    let keep = entry.index - 1;
                    if keep < self.commit_index {
                        // Only reachable under an unsafe commit rule; rewind so
                        // the replacement is applied again and the conflict shows.
                        warn!("{} truncating committed entries above {keep}", self.id);
                        self.commit_index = keep;
                        self.last_applied = self.last_applied.min(keep);
                    }
                    self.log.truncate(keep as usize);
                    self.log.push(entry.clone());
                }
                None => self.log.push(entry.clone()),
            }
        }
        let last_new = prev_log_index + entries.len() as u64;
        if leader_commit > self.commit_index {
            self.commit_index = self.commit_index.max(leader_commit.min(last_new));
        }
        reply(self, true, last_new)
    }

    pub fn handle_append_entries_reply<R: Rng + ?Sized>(&mut self, msg: &Message, now: SimTime, rng: &mut R) -> Vec<Message> {
        let MessageBody::AppendEntriesReply { term, success, match_hint } = msg.body else {
            panic!("handle_append_entries_reply given {:?}", msg.body.kind());
        };
        self.observe_term(term, now, rng);
        if self.role != Role::Leader || term != self.current_term {
            return Vec::new();
        }
        let peer = msg.src.0;
        if success {
            let hint = match_hint.min(self.last_log_index());
            if hint > self.match_index[peer] {
                self.match_index[peer] = hint;
            }
            self.next_index[peer] = self.next_index[peer].max(self.match_index[peer] + 1);
            self.advance_commit();
            if self.next_index[peer] <= self.last_log_index() {
                return vec![self.append_for(msg.src)];
            }
            Vec::new()
        } else {
            let floor = self.match_index[peer] + 1;
            self.next_index[peer] = self.next_index[peer].saturating_sub(1).max(floor);
            vec![self.append_for(msg.src)]
        }
    }

    /// Leader path appends the block and replicates it; everyone else
    /// redirects to the leader they know of.
    pub fn handle_client_task(&mut self, payload: BlockPayload) -> (Vec<Message>, TaskOutcome) {
        if self.role != Role::Leader {
            return (Vec::new(), TaskOutcome::Redirect(self.known_leader));
        }
        let index = self.last_log_index() + 1;
        self.log.push(LogEntry { term: self.current_term, index, block: payload });
        self.match_index[self.id.0] = index;
        self.advance_commit();
        let peers: Vec<NodeId> = self.peers().collect();
        let out = peers.into_iter().map(|p| self.append_for(p)).collect();
        (out, TaskOutcome::Appended { index })
    }

    fn advance_commit(&mut self) {
        debug_assert_eq!(self.role, Role::Leader);
        match self.commit_rule {
            CommitRule::LeaderOnly => {
                self.commit_index = self.last_log_index();
            }
            rule => {
                let quorum = self.quorum();
                for n in (self.commit_index + 1..=self.last_log_index()).rev() {
                    if rule == CommitRule::CurrentTermQuorum && self.term_at(n) != Some(self.current_term) {
                        continue;
                    }
                    let replicas = self.match_index.iter().filter(|&&m| m >= n).count();
                    if replicas >= quorum {
                        self.commit_index = n;
                        break;
                    }
                }
            }
        }
    }

    /// Returns committed entries not yet handed to the state machine.
    pub fn take_applied(&mut self) -> Vec<LogEntry> {
        let from = self.last_applied as usize;
        let to = self.commit_index as usize;
        self.last_applied = self.commit_index;
        self.log[from..to].to_vec()
    }

    /// Leader gives up leadership without a term change.
    pub fn step_down<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) {
        if self.role != Role::Follower {
            self.role = Role::Follower;
            self.votes_received.clear();
            self.known_leader = None;
            self.reset_election_timer(now, rng);
        }
    }

    /// Crash-recovery: term, vote and log survive, volatile role state resets.
    pub fn recover<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) {
        self.role = Role::Follower;
        self.votes_received.clear();
        self.known_leader = None;
        self.reset_election_timer(now, rng);
    }
}
