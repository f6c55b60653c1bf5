//! Resilient consensus under ternary self- and event-triggered control.
//!
//! Regular agents move at unit speed toward a trimmed weighted average of the
//! values their neighbors last sent, while up to `F` adversaries in each
//! neighborhood broadcast whatever they like. The simulator is an exact
//! discrete-event engine over piecewise-linear trajectories.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod error;
pub mod filter;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};
