//! Raft consensus over a block ledger on a simulated edge cluster, an
//! analytic latency model for block rounds, and a DDPG agent that learns to
//! bias leader election toward the cheapest leader.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the simulator and the trainer.

pub mod ddpg;
pub mod env;
pub mod latency;
pub mod policy;
pub mod raft;
mod scalar;
mod time;
pub mod sim;

pub use scalar::Scalar;
pub use time::SimTime;

pub type LatencyParams64 = latency::LatencyParams<f64>;
pub type LatencyParams32 = latency::LatencyParams<f32>;
pub type LatencyBreakdown64 = latency::LatencyBreakdown<f64>;
pub type Mlp64 = ddpg::Mlp<f64>;
pub type Mlp32 = ddpg::Mlp<f32>;
pub type AgentNets64 = ddpg::AgentNets<f64>;
pub type AgentNets32 = ddpg::AgentNets<f32>;
