//! Deterministic Raft state machine.
//!
//! Nodes never read a clock or touch I/O: the simulator hands each handler
//! the current [`SimTime`](crate::SimTime) and a seeded PRNG, and routes the
//! returned messages itself.

mod node;
pub mod safety;
mod types;

pub use node::{RaftConfig, RaftNode};
pub use safety::{SafetyMonitor, Violation};
pub use types::*;
