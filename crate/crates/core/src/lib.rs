//! Event-partitioned multi-agent video question answering.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alliance;
pub mod changepoint;
pub mod config;
pub mod embseg;
pub mod error;
pub mod exec;
pub mod features;
pub mod ingest;
pub mod novelty;
pub mod partition;
pub mod pipeline;
pub mod ports;
pub mod rng;
pub mod runner;
pub mod selection;
pub mod sidecar;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Exec;
