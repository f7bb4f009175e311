//! Centralized Riccati observer for all agent positions and velocities.
//!
//! The plant is the stacked double integrator ẋ = Ax + Bu with
//! x = [p; v] ∈ R^{2nd}, and the measurable output residual is
//!
//!   z = −L_B(g^m) p̂ + C₁ (p₁^m − p̂₁),
//!
//! where L_B is the bearing Laplacian built from the measured bearings and
//! C₁ anchors the leader. Because L_B p ≡ 0 for the true positions, z equals
//! y − Cx̂ for the output matrix C = [L_B + C₁ | 0] without ever forming the
//! unmeasurable y itself. The gain is K = κ M Cᵀ Q with M solving the
//! continuous Riccati equation Ṁ = AM + MAᵀ − MCᵀQCM + S.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{self, BearingSnapshot};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::linalg;
use crate::observer::MIN_RICCATI_EIGENVALUE;
use crate::sensing::MeasurementSet;

/// Gains of the centralized observer.
#[derive(Debug, Clone)]
pub struct CentralizedGains {
    /// Riccati gain scale; stability requires κ ≥ 1/2.
    pub kappa: f64,
    /// Output weight Q ∈ R^{nd×nd}, symmetric positive semidefinite.
    pub q: DMatrix<f64>,
    /// State-noise weight S ∈ R^{2nd×2nd}, symmetric positive semidefinite.
    pub s: DMatrix<f64>,
}

impl CentralizedGains {
    /// Scalar gains κ, Q = q·I, S = s·I for an n-agent formation in R^d.
    pub fn scalar(n: usize, d: usize, kappa: f64, q: f64, s: f64) -> Self {
        Self {
            kappa,
            q: DMatrix::identity(n * d, n * d) * q,
            s: DMatrix::identity(2 * n * d, 2 * n * d) * s,
        }
    }
}

/// Mutable state of the observer: the estimate and the Riccati matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedState {
    pub p_hat: DVector<f64>,
    pub v_hat: DVector<f64>,
    /// Riccati matrix M ∈ R^{2nd×2nd}, symmetric positive definite.
    pub m: DMatrix<f64>,
}

impl CentralizedState {
    /// Flat dimension: 2nd estimate entries plus the (2nd)² entries of M.
    pub fn dim(n: usize, d: usize) -> usize {
        let k = 2 * n * d;
        k + k * k
    }

    /// Estimates from stacked vectors, M(0) as given.
    pub fn new(p_hat: DVector<f64>, v_hat: DVector<f64>, m: DMatrix<f64>) -> Self {
        Self { p_hat, v_hat, m }
    }

    /// Pack as [p̂ | v̂ | M column-major].
    pub fn flatten(&self) -> DVector<f64> {
        let nd = self.p_hat.len();
        let k = 2 * nd;
        let mut out = DVector::zeros(k + k * k);
        out.rows_mut(0, nd).copy_from(&self.p_hat);
        out.rows_mut(nd, nd).copy_from(&self.v_hat);
        out.rows_mut(k, k * k).copy_from_slice(self.m.as_slice());
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(n: usize, d: usize, x: &[f64]) -> Self {
        let nd = n * d;
        let k = 2 * nd;
        Self {
            p_hat: DVector::from_column_slice(&x[..nd]),
            v_hat: DVector::from_column_slice(&x[nd..k]),
            m: DMatrix::from_column_slice(k, k, &x[k..]),
        }
    }
}

/// The observer itself: topology, leader choice, gains, and the constant
/// system matrices.
#[derive(Debug, Clone)]
pub struct CentralizedObserver {
    g: FormationGraph,
    leader: Option<usize>,
    gains: CentralizedGains,
    /// Stacked double-integrator drift A = [[0, I], [0, 0]] ∈ R^{2nd×2nd}.
    a: DMatrix<f64>,
}

impl CentralizedObserver {
    pub fn new(g: &FormationGraph, leader: Option<usize>, gains: CentralizedGains) -> Result<Self> {
        let nd = g.n() * g.d();
        if gains.kappa < 0.5 {
            return Err(Error::Validation(format!(
                "centralized observer gain κ = {} is below the stability minimum 1/2",
                gains.kappa
            )));
        }
        if let Some(l) = leader {
            if l >= g.n() {
                return Err(Error::VertexOutOfRange {
                    vertex: l + 1,
                    n: g.n(),
                });
            }
        }
        for (name, mat, dim) in [("Q", &gains.q, nd), ("S", &gains.s, 2 * nd)] {
            if mat.shape() != (dim, dim) {
                return Err(Error::Validation(format!(
                    "{name} must be {dim}×{dim}, got {}×{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if (mat - mat.transpose()).amax() > 1e-9 {
                return Err(Error::Validation(format!("{name} must be symmetric")));
            }
            if !linalg::is_psd(mat, 1e-10) {
                return Err(Error::Validation(format!(
                    "{name} must be positive semidefinite"
                )));
            }
        }
        let mut a = DMatrix::zeros(2 * nd, 2 * nd);
        for i in 0..nd {
            a[(i, nd + i)] = 1.0;
        }
        Ok(Self {
            g: g.clone(),
            leader,
            gains,
            a,
        })
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.g
    }

    pub fn gains(&self) -> &CentralizedGains {
        &self.gains
    }

    /// Position block of the output matrix: L_B(g^m) plus the leader anchor.
    /// The full output matrix is C = [this | 0] ∈ R^{nd×2nd}.
    pub fn output_position_block(&self, meas: &BearingSnapshot) -> Result<DMatrix<f64>> {
        let mut block = analysis::bearing_laplacian(&self.g, meas)?;
        if let Some(l) = self.leader {
            block += analysis::leader_anchor(self.g.n(), self.g.d(), l);
        }
        Ok(block)
    }

    /// Full output matrix C = [L_B + C₁ | 0].
    pub fn output_matrix(&self, meas: &BearingSnapshot) -> Result<DMatrix<f64>> {
        let nd = self.g.n() * self.g.d();
        let mut c = DMatrix::zeros(nd, 2 * nd);
        c.view_mut((0, 0), (nd, nd))
            .copy_from(&self.output_position_block(meas)?);
        Ok(c)
    }

    /// Riccati derivative Ṁ = AM + MAᵀ − M CᵀQC M + S, where the output
    /// position block is `g_pos` (None models C ≡ 0, i.e. no measurements).
    pub fn cre_derivative(&self, m: &DMatrix<f64>, g_pos: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let nd = self.g.n() * self.g.d();
        let mut dm = &self.a * m + m * self.a.transpose() + &self.gains.s;
        if let Some(gp) = g_pos {
            // CᵀQC = [[GᵀQG, 0], [0, 0]] with G the position block.
            let gqg = gp.transpose() * &self.gains.q * gp;
            let mut ctqc = DMatrix::zeros(2 * nd, 2 * nd);
            ctqc.view_mut((0, 0), (nd, nd)).copy_from(&gqg);
            dm -= m * ctqc * m;
        }
        dm
    }

    /// Measurable innovation z = −L_B(g^m) p̂ + C₁ (p₁^m − p̂₁).
    fn innovation(
        &self,
        p_hat: &DVector<f64>,
        meas: &BearingSnapshot,
        leader_p: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        let lb = analysis::bearing_laplacian(&self.g, meas)?;
        let mut z = -(&lb * p_hat);
        if let Some(l) = self.leader {
            let d = self.g.d();
            let p1 = leader_p.ok_or_else(|| {
                Error::Validation(
                    "observer configured with a leader but no leader measurement".into(),
                )
            })?;
            for a in 0..d {
                z[l * d + a] += p1[a] - p_hat[l * d + a];
            }
        }
        Ok(z)
    }

    /// Time derivative of the full observer state under frozen measurements.
    pub fn derivative(
        &self,
        state: &CentralizedState,
        meas: &BearingSnapshot,
        leader_p: Option<&DVector<f64>>,
        u: &[DVector<f64>],
    ) -> Result<CentralizedState> {
        let (n, d) = (self.g.n(), self.g.d());
        let nd = n * d;
        if u.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} acceleration inputs, got {}",
                u.len()
            )));
        }
        let mut m = state.m.clone();
        linalg::symmetrize(&mut m);

        let g_pos = self.output_position_block(meas)?;
        let z = self.innovation(&state.p_hat, meas, leader_p)?;
        // K z = κ M Cᵀ Q z with Cᵀ Q z = [GᵀQz; 0]; G is symmetric.
        let mut cqz = DVector::zeros(2 * nd);
        cqz.rows_mut(0, nd)
            .copy_from(&(g_pos.transpose() * &self.gains.q * &z));
        let kz = self.gains.kappa * &m * cqz;

        let mut dp = state.v_hat.clone();
        dp += kz.rows(0, nd);
        let mut dv = DVector::from_iterator(nd, u.iter().flat_map(|ui| ui.iter().copied()));
        dv += kz.rows(nd, nd);

        let dm = self.cre_derivative(&m, Some(&g_pos));
        Ok(CentralizedState {
            p_hat: dp,
            v_hat: dv,
            m: dm,
        })
    }

    /// Abort if the Riccati matrix has (numerically) lost definiteness.
    pub fn check_conditioning(&self, m: &DMatrix<f64>, t: f64) -> Result<f64> {
        let lambda_min = linalg::lambda_min(m);
        if lambda_min < MIN_RICCATI_EIGENVALUE {
            return Err(Error::IllConditioned {
                observer: "centralized".into(),
                t,
                lambda_min,
            });
        }
        Ok(lambda_min)
    }

    /// Advance one RK4 step with the measurements of `meas` held over the
    /// whole step; M is symmetrized afterwards.
    pub fn step(
        &self,
        state: &CentralizedState,
        meas: &MeasurementSet,
        dt: f64,
    ) -> Result<CentralizedState> {
        self.check_conditioning(&state.m, meas.t)?;
        let (n, d) = (self.g.n(), self.g.d());
        let x = state.flatten();
        let next = dynamics::rk4_step(meas.t, &x, dt, |_, xs| {
            let s = CentralizedState::unflatten(n, d, xs.as_slice());
            let leader_p = self.leader.is_some().then_some(&meas.leader_p);
            Ok(self
                .derivative(&s, &meas.bearings, leader_p, &meas.u)?
                .flatten())
        })?;
        let mut out = CentralizedState::unflatten(n, d, next.as_slice());
        linalg::symmetrize(&mut out.m);
        Ok(out)
    }
}
