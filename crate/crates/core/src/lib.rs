//! Packet-level caching simulator for information-centric networks.
//!
//! Covers replacement caches (LRU, FIFO, RND), the selection policy and its
//! coordinated multi-cache variant, IRM analytics, traffic generation, a
//! discrete-event network engine and the metrics computed from its counters.

// Negated float comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinated;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod irm;
pub mod metrics;
pub mod model;
pub mod replacement;
pub mod selection;
pub mod tandem;
pub mod topology;
pub mod traffic;

pub use engine::{run_simulation, run_simulation_with, CachePolicy, CacheSpec, RunOptions, RunResult, Scenario};
pub use error::{Error, Result};
pub use metrics::{compute_report, MetricsReport};
pub use model::{ContentId, PacketId};
