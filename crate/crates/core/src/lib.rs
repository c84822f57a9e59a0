//! Cascading failures in load-sharing networks.
//!
//! Every node carries a load below a unit capacity. An exponential shock is
//! added once, overloaded nodes fail, and each failed node's load is split
//! equally among its surviving neighbours, which may fail in turn. The crate
//! provides:
//!
//! - [`graph`]: Erdős–Rényi topologies and the column-normalized
//!   redistribution matrix.
//! - [`cascade`]: the staged simulator, Monte Carlo aggregation and an
//!   empirical check of the large-N redistribution constant.
//! - [`meanfield`] and [`bimodal`]: scalar recursions describing the
//!   infinite fully connected network for one- and two-level initial loads.
//! - [`threshold`]: location of the critical mean disturbance and the sweeps
//!   built on it.
//! - [`harness`]: configuration, seeding and CSV/JSON emission behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bimodal;
pub mod cascade;
pub mod error;
pub mod graph;
pub mod harness;
pub mod meanfield;
pub mod rng;
pub mod threshold;

pub use error::{Error, Result};
