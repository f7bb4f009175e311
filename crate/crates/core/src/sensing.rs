//! Measurement generation: noisy inter-agent bearings plus the leader's own
//! (exact) position and velocity.
//!
//! The multiplicative skew model perturbs a 3-D bearing as
//! g^m = (I + (σw)×) g / ‖(I + (σw)×) g‖ with w drawn fresh from the
//! standard normal distribution for every edge at every step. Because that
//! map is linear before renormalization, applying the same draw to both
//! orientations of an edge automatically yields g^m_ji = −g^m_ij, so one
//! draw per undirected edge keeps the two directed measurements consistent.
//! In 2-D, where the cross-product matrix does not exist, the substitute
//! rotates the bearing by the angle σw with scalar standard-normal w.
//!
//! Each edge owns its own counter-based RNG stream seeded from the scenario
//! seed and the edge index, so adding or removing an edge never perturbs the
//! noise on the others.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::BearingSnapshot;
use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::graph::FormationGraph;

/// Kind of bearing perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Measurements equal the true bearings.
    #[default]
    None,
    /// 3-D multiplicative skew: g^m = normalize((I + (σw)×) g), w ~ N(0, I₃).
    MultiplicativeSkew,
    /// 2-D substitute: rotate g by the angle σw, scalar w ~ N(0, 1).
    PlanarRotation,
}

/// Bearing noise configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Scale factor σ applied to the standard-normal draw.
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// Reject negative magnitudes and kind/dimension mismatches.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.magnitude < 0.0 {
            return Err(Error::Validation(format!(
                "noise magnitude must be nonnegative, got {}",
                self.magnitude
            )));
        }
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::MultiplicativeSkew if d == 3 => Ok(()),
            NoiseKind::MultiplicativeSkew => Err(Error::NoiseDimension {
                kind: "multiplicative-skew",
                requires: 3,
                d,
            }),
            NoiseKind::PlanarRotation if d == 2 => Ok(()),
            NoiseKind::PlanarRotation => Err(Error::NoiseDimension {
                kind: "planar-rotation",
                requires: 2,
                d,
            }),
        }
    }

    /// Dimension of the per-edge noise draw.
    fn draw_dim(&self) -> usize {
        match self.kind {
            NoiseKind::None => 0,
            NoiseKind::MultiplicativeSkew => 3,
            NoiseKind::PlanarRotation => 1,
        }
    }
}

/// Cross-product matrix a× with (a×)b = a × b, for a ∈ R³.
fn skew(a: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0],
    )
}

/// Perturb one unit bearing with an explicit noise draw `w`.
pub fn apply_noise(model: &NoiseModel, g: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    model.validate(g.len())?;
    match model.kind {
        NoiseKind::None => Ok(g.clone()),
        NoiseKind::MultiplicativeSkew => {
            let perturbed = g + skew(&(w * model.magnitude)) * g;
            let norm = perturbed.norm();
            if norm <= 1e-12 {
                return Err(Error::Validation(
                    "skew perturbation collapsed the bearing to zero".into(),
                ));
            }
            Ok(perturbed / norm)
        }
        NoiseKind::PlanarRotation => {
            let angle = model.magnitude * w[0];
            let (sin, cos) = angle.sin_cos();
            Ok(DVector::from_column_slice(&[
                cos * g[0] - sin * g[1],
                sin * g[0] + cos * g[1],
            ]))
        }
    }
}

/// Per-edge noise streams for one simulation run.
///
/// Stream k is seeded from (scenario seed, edge index k) and advances only
/// when a draw is taken, so two runs with the same seed produce bitwise
/// identical noise.
#[derive(Debug, Clone)]
pub struct EdgeNoise {
    model: NoiseModel,
    streams: Vec<ChaCha12Rng>,
}

impl EdgeNoise {
    pub fn new(model: NoiseModel, g: &FormationGraph) -> Result<Self> {
        model.validate(g.d())?;
        let streams = (0..g.m())
            .map(|k| {
                let mut seed = [0u8; 32];
                seed[..8].copy_from_slice(&model.seed.to_le_bytes());
                seed[8..16].copy_from_slice(&(k as u64).to_le_bytes());
                ChaCha12Rng::from_seed(seed)
            })
            .collect();
        Ok(Self { model, streams })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// One fresh noise draw per edge.
    pub fn draw(&mut self) -> Vec<DVector<f64>> {
        let dim = self.model.draw_dim();
        self.streams
            .iter_mut()
            .map(|rng| DVector::from_iterator(dim, (0..dim).map(|_| rng.sample(StandardNormal))))
            .collect()
    }

    /// Perturb a whole snapshot with an explicit set of per-edge draws.
    pub fn perturb(
        &self,
        snap: &BearingSnapshot,
        draws: &[DVector<f64>],
    ) -> Result<BearingSnapshot> {
        if draws.len() != snap.len() {
            return Err(Error::Validation(format!(
                "{} noise draws for {} edges",
                draws.len(),
                snap.len()
            )));
        }
        let mut noisy = BearingSnapshot::new(snap.t, snap.len());
        for (k, w) in draws.iter().enumerate() {
            if let Some(g) = snap.get(k) {
                noisy.set(k, apply_noise(&self.model, g, w)?);
            }
        }
        Ok(noisy)
    }
}

/// Everything the agents can sense at one instant.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub t: f64,
    /// Noisy bearings in the stored edge orientation.
    pub bearings: BearingSnapshot,
    /// Leader position, measured exactly.
    pub leader_p: DVector<f64>,
    /// Leader velocity, measured exactly.
    pub leader_v: DVector<f64>,
    /// Per-agent accelerations, known exactly as applied inputs.
    pub u: Vec<DVector<f64>>,
}

/// Produce the measurement set for one step: draw fresh noise for every
/// edge, perturb the bearings, and pass the leader state and the applied
/// accelerations through exactly.
pub fn measure(
    snap: &BearingSnapshot,
    leader: &AgentState,
    u: &[DVector<f64>],
    noise: &mut EdgeNoise,
) -> Result<MeasurementSet> {
    let draws = noise.draw();
    let bearings = noise.perturb(snap, &draws)?;
    Ok(MeasurementSet {
        t: snap.t,
        bearings,
        leader_p: leader.p.clone(),
        leader_v: leader.v.clone(),
        u: u.to_vec(),
    })
}
