//! Exploratory deep Q-learning for weighted Max-Cut.
//!
//! The agent starts from an arbitrary solution and keeps flipping vertices
//! in and out of the cut set for a fixed horizon, rewarded for beating the
//! best cut it has seen so far. Alongside the agent the crate provides the
//! greedy MaxCutApprox baselines, exact oracles for small graphs and the
//! evaluation harness used to compare them.

pub mod agent;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod env;
pub mod error;
pub mod graph;
pub mod qnet;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
