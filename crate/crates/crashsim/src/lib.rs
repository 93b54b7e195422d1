//! Round-based simulation of communication-efficient consensus under crash
//! faults, with overlay-graph tooling and an experiment harness.

pub mod adversary;
pub mod biased;
pub mod engine;
pub mod experiments;
pub mod gossip;
pub mod message;
pub mod overlay;
pub mod parameterized;
pub mod params;
pub mod signaling;

pub use engine::{Metrics, ProcCtx, RunResult, Sim, SimConfig, SimError};
pub use message::{Payload, ProcessId, RumorSet, Value};
pub use params::Profile;
