//! Opportunistic access over Markov on/off channels with myopic sensing.
//!
//! The crate simulates a secondary user that senses one of `N` independent
//! continuous-time on/off channels per slot and transmits under either a
//! debt-based (adaptive) or a memoryless rule. It evaluates the optimal
//! effective bandwidth and throughput in closed form, computes spectral
//! limits of the joint channel/pointer chain, estimates both quantities from
//! traces, and checks the optimality of myopic sensing with a risk-sensitive
//! dynamic program.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod policy;
pub mod risk_dp;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
