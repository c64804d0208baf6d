//! Hierarchical token bucket scheduling and a deterministic packet-level
//! simulator around it.
//!
//! Everything here is `no_std` + `alloc`: file formats, the CLI and other IO
//! live in the `htbsim` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod class;
pub mod classify;
pub mod drr;
mod error;
pub mod oracle;
pub mod queue;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod trace;
pub mod tree;
pub mod units;

pub use class::{ClassMode, ClassParams, HtbClass, HtbClassConfig, DEFAULT_MTU, MAX_PRIORITY};
pub use error::{BuildError, SchedError};
pub use tree::{check_hierarchy, BuildWarning, ClassId, ClassSnapshot, Decision, HtbTree, MAX_DEPTH};
pub use classify::{admit, classify, Admission, DropReason, FlowFilter, FlowMatch};
pub use oracle::{expected_rates, ActiveSet, Epoch, OracleError, Schedule};
pub use queue::{FlowId, Label, LeafQueue, Packet, Push, QueueBank, QueueCounters, DEFAULT_QUEUE_CAPACITY};
pub use scenario::{validate, CbrSource, FilterRule, FlowSpec, Scenario, Violation};
pub use sim::{run, SimError, Simulation};
pub use stats::{ceiling_violations, deviation_stats, CeilingViolation, ClassCeiling, DeviationStats, StatsError};
pub use trace::{Departure, DropCounts, RunTrace, ThroughputTrace};
pub use units::{transmission_time, Rate, SimTime, ZeroRate};
