//! State observers driven by bearing measurements.
//!
//! Two designs share the same Riccati machinery: a centralized observer
//! estimating every agent's position and velocity from the stacked bearing
//! output plus the leader's position, and a decentralized scheme in which
//! each agent fuses local bearing residuals with per-edge relative-state
//! observers running on persistently excited edges.

pub mod centralized;
pub mod decentralized;

/// Observers abort rather than divide by a collapsing Riccati matrix.
pub const MIN_RICCATI_EIGENVALUE: f64 = 1e-10;
