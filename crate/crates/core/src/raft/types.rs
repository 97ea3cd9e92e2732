use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a node within its cluster, `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Pseudo-address of the cloud task source. Never a cluster member.
    pub const CLOUD: NodeId = NodeId(usize::MAX);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == NodeId::CLOUD {
            f.write_str("cloud")
        } else {
            write!(f, "n{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term(pub u64);

impl Term {
    pub fn next(self) -> Term {
        Term(self.0 + 1)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

impl Role {
    /// Whether `self -> to` is an edge of the Raft role graph.
    /// Self-loops are legal for followers and candidates (re-election).
    pub fn can_transition_to(self, to: Role) -> bool {
        use Role::*;
        matches!(
            (self, to),
            (Follower, Follower)
                | (Follower, Candidate)
                | (Candidate, Leader)
                | (Candidate, Follower)
                | (Candidate, Candidate)
                | (Leader, Follower)
                | (Leader, Leader)
        )
    }
}

/// The block recorded by one log entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPayload {
    pub task_id: u64,
    /// Transactions in the block (the exponent of the block-generation cost).
    pub tx_count: u32,
    pub tx_batch_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub term: Term,
    /// 1-based position in the log.
    pub index: u64,
    pub block: BlockPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageBody {
    RequestVotes {
        term: Term,
        candidate_id: NodeId,
        last_log_index: u64,
        last_log_term: Term,
    },
    RequestVotesReply {
        term: Term,
        vote_granted: bool,
    },
    AppendEntries {
        term: Term,
        leader_id: NodeId,
        prev_log_index: u64,
        prev_log_term: Term,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    },
    AppendEntriesReply {
        term: Term,
        success: bool,
        /// Highest index the responder knows to match the leader's log.
        match_hint: u64,
    },
    ClientTask {
        payload: BlockPayload,
    },
}

impl MessageBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            MessageBody::RequestVotes { .. } => MessageKind::RequestVotes,
            MessageBody::RequestVotesReply { .. } => MessageKind::RequestVotesReply,
            MessageBody::AppendEntries { .. } => MessageKind::AppendEntries,
            MessageBody::AppendEntriesReply { .. } => MessageKind::AppendEntriesReply,
            MessageBody::ClientTask { .. } => MessageKind::ClientTask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    RequestVotes,
    RequestVotesReply,
    AppendEntries,
    AppendEntriesReply,
    ClientTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub body: MessageBody,
}

impl Message {
    pub fn new(src: NodeId, dst: NodeId, body: MessageBody) -> Self {
        Message { src, dst, body }
    }
}

/// Result of handing a client task to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskOutcome {
    /// Appended by the leader at this log index.
    Appended { index: u64 },
    /// Not a leader; the caller should retry at the named node, if any.
    Redirect(Option<NodeId>),
}

/// How the leader decides that an index is committed.
///
/// Only `CurrentTermQuorum` is safe. The other variants exist so the safety
/// campaign can prove it detects a broken commit rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommitRule {
    #[default]
    CurrentTermQuorum,
    /// Drops the current-term restriction.
    AnyTermQuorum,
    /// Commits on local append, without waiting for followers.
    LeaderOnly,
}

/// One observable state change of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub node: NodeId,
    pub at: crate::SimTime,
    pub old_role: Role,
    pub new_role: Role,
    pub term: Term,
    pub commit_index: u64,
}
