//! Observer-based formation tracking control.
//!
//! Each agent applies the PD-plus-feedforward law
//! u_i = −κ_{p_i}(p̂_i − p_i*) − κ_{v_i}(v̂_i − v_i*) + u_i*, where
//! (p_i*, v_i*, u_i*) is the agent's reference sample and (p̂_i, v̂_i) comes
//! from whichever estimate source the scenario selects. With perfect state
//! feedback the per-axis closed loop is s² + κ_v s + κ_p, Hurwitz for any
//! positive gains.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::ReferenceSample;
use crate::error::{Error, Result};

/// Where the controller's state feedback comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackSource {
    /// Estimates of the decentralized two-level observer.
    #[default]
    Decentralized,
    /// Estimates of the centralized Riccati observer.
    Centralized,
    /// The true states (ablation baseline).
    Truth,
}

/// Per-agent PD gains, strictly positive.
#[derive(Debug, Clone)]
pub struct ControlGains {
    kp: Vec<f64>,
    kv: Vec<f64>,
}

impl ControlGains {
    pub fn new(kp: Vec<f64>, kv: Vec<f64>) -> Result<Self> {
        if kp.len() != kv.len() {
            return Err(Error::Validation(format!(
                "{} position gains versus {} velocity gains",
                kp.len(),
                kv.len()
            )));
        }
        if let Some(bad) = kp
            .iter()
            .chain(kv.iter())
            .find(|&&k| !(k.is_finite() && k > 0.0))
        {
            return Err(Error::Validation(format!(
                "controller gains must be strictly positive, got {bad}"
            )));
        }
        Ok(Self { kp, kv })
    }

    /// The same κ_p, κ_v for every agent.
    pub fn uniform(n: usize, kp: f64, kv: f64) -> Result<Self> {
        Self::new(vec![kp; n], vec![kv; n])
    }

    pub fn n(&self) -> usize {
        self.kp.len()
    }

    pub fn kp(&self, i: usize) -> f64 {
        self.kp[i]
    }

    pub fn kv(&self, i: usize) -> f64 {
        self.kv[i]
    }
}

/// Tracking command for agent i from its fed-back state and its slice of
/// the reference sample.
pub fn control(
    i: usize,
    p_fb: &DVector<f64>,
    v_fb: &DVector<f64>,
    reference: &ReferenceSample,
    gains: &ControlGains,
) -> DVector<f64> {
    gains.kp(i) * (&reference.p[i] - p_fb)
        + gains.kv(i) * (&reference.v[i] - v_fb)
        + &reference.u[i]
}
