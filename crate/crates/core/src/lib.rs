//! Simulation and analysis library for bearing-only cooperative localization
//! and formation tracking of second-order multi-agent systems.
//!
//! Agents move with double-integrator dynamics and sense inter-agent
//! *bearings* (unit direction vectors) along the edges of a formation graph.
//! A single leader additionally knows its own position. From this information
//! the library provides:
//!
//! * a centralized Riccati observer estimating all positions and velocities
//!   ([`observer::centralized`]),
//! * a decentralized two-stage estimator: per-edge Riccati observers on
//!   persistently excited edges feeding a distributed fusion observer
//!   ([`observer::decentralized`]),
//! * a tracking controller that closes the loop on estimated states
//!   ([`controller`]),
//! * excitation analysis deciding which bearings (and whether the formation
//!   as a whole) are persistently excited ([`analysis`]),
//! * a scenario/trace/metrics harness and CLI around all of the above
//!   ([`scenario`], [`sim`]).

pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod network;
pub mod observer;
pub mod scenario;
pub mod sensing;
pub mod sim;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod test_util;
