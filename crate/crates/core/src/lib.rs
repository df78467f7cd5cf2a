//! Library for scheduling transactions across blockchain shards.
//!
//! The crate models a sharded ledger as a complete weighted graph of shards,
//! builds sparse-cover cluster hierarchies over it, and runs four event-driven
//! schedulers (stateless/stateful, single-/multi-leader) under a deterministic
//! discrete-event engine. Exact oracles and measurement helpers sit alongside
//! so that scheduling quality can be checked against brute-force optima.

pub mod config;
pub mod conflict;
pub mod cover;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod sched;
pub mod sim;
pub mod trace;
pub mod workload;

pub use error::{Error, Result};
