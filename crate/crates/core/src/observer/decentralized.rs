//! Decentralized two-level observer.
//!
//! Level one runs a small Riccati observer on every persistently excited
//! edge k = (i, j), estimating the relative state
//! (p̄_k, v̄_k) = (p_j − p_i, v_j − v_i) from the edge's bearing alone. The
//! output map C_k = π_{ḡ_k}[I 0] annihilates the true relative position, so
//! the output injection needs no measured quantity besides the bearing:
//! the innovation is simply −C_k x̂̄_k.
//!
//! Level two is a distributed Luenberger observer: each agent fuses
//! residuals from its incident edges — identity-weighted residuals against
//! the edge-observer estimates on PE edges, projector-weighted consensus
//! residuals on the rest — plus a leader position correction, and integrates
//! its own position/velocity estimate. All cross-agent information travels
//! in [`EstimateMessage`](crate::network::EstimateMessage)s.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{self, BearingSnapshot};
use crate::dynamics::{self, AgentState};
use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::linalg;
use crate::network::Round;
use crate::observer::MIN_RICCATI_EIGENVALUE;

/// Gains of one edge observer.
#[derive(Debug, Clone)]
pub struct EdgeGains {
    /// Riccati gain scale; stability requires κ_k ≥ 1/2.
    pub kappa: f64,
    /// Output weight Q_k ∈ R^{d×d}, symmetric positive semidefinite.
    pub q: DMatrix<f64>,
    /// State-noise weight S_k ∈ R^{2d×2d}, symmetric positive semidefinite.
    pub s: DMatrix<f64>,
}

impl EdgeGains {
    /// Scalar gains κ, Q = q·I_d, S = s·I_{2d}.
    pub fn scalar(d: usize, kappa: f64, q: f64, s: f64) -> Self {
        Self {
            kappa,
            q: DMatrix::identity(d, d) * q,
            s: DMatrix::identity(2 * d, 2 * d) * s,
        }
    }
}

/// Mutable state of one edge observer.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    /// Estimate of p̄_k = p_j − p_i in the stored edge orientation.
    pub p_bar: DVector<f64>,
    /// Estimate of v̄_k = v_j − v_i.
    pub v_bar: DVector<f64>,
    /// Riccati matrix M_k ∈ R^{2d×2d}, symmetric positive definite.
    pub m: DMatrix<f64>,
}

impl EdgeState {
    /// Flat storage dimension: 2d estimate entries plus the (2d)² of M_k.
    pub fn dim(d: usize) -> usize {
        2 * d + 4 * d * d
    }

    pub fn new(p_bar: DVector<f64>, v_bar: DVector<f64>, m: DMatrix<f64>) -> Self {
        Self { p_bar, v_bar, m }
    }

    /// Pack as [p̂̄ | v̂̄ | M_k column-major].
    pub fn flatten(&self) -> DVector<f64> {
        let d = self.p_bar.len();
        let mut out = DVector::zeros(Self::dim(d));
        out.rows_mut(0, d).copy_from(&self.p_bar);
        out.rows_mut(d, d).copy_from(&self.v_bar);
        out.rows_mut(2 * d, 4 * d * d)
            .copy_from_slice(self.m.as_slice());
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(d: usize, x: &[f64]) -> Self {
        Self {
            p_bar: DVector::from_column_slice(&x[..d]),
            v_bar: DVector::from_column_slice(&x[d..2 * d]),
            m: DMatrix::from_column_slice(2 * d, 2 * d, &x[2 * d..]),
        }
    }
}

/// Riccati observer for the relative state of one persistently excited edge.
#[derive(Debug, Clone)]
pub struct EdgeObserver {
    /// Edge index in the graph's edge list.
    index: usize,
    /// Edge endpoints, 1-based, for diagnostics.
    endpoints: (usize, usize),
    d: usize,
    gains: EdgeGains,
    /// A_k = [[0, I_d], [0, 0]].
    a: DMatrix<f64>,
}

impl EdgeObserver {
    pub fn new(
        index: usize,
        endpoints: (usize, usize),
        d: usize,
        gains: EdgeGains,
    ) -> Result<Self> {
        if gains.kappa < 0.5 {
            return Err(Error::Validation(format!(
                "edge observer gain κ = {} is below the stability minimum 1/2",
                gains.kappa
            )));
        }
        for (name, mat, dim) in [("Q_k", &gains.q, d), ("S_k", &gains.s, 2 * d)] {
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
        let mut a = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            a[(i, d + i)] = 1.0;
        }
        Ok(Self {
            index,
            endpoints,
            d,
            gains,
            a,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn label(&self) -> String {
        format!("edge ({},{})", self.endpoints.0, self.endpoints.1)
    }

    /// Time derivative of (p̂̄, v̂̄, M_k) for a frozen measured bearing and
    /// relative input ū_k = u_j − u_i (terminal minus initial endpoint).
    pub fn derivative(
        &self,
        state: &EdgeState,
        g_m: &DVector<f64>,
        u_bar: &DVector<f64>,
    ) -> Result<EdgeState> {
        let d = self.d;
        let pi = analysis::projector(g_m)?;
        let mut m = state.m.clone();
        linalg::symmetrize(&mut m);

        // Innovation: the true output π_{ḡ}p̄ is identically zero, so
        // y − C_k x̂ = −π_{g^m} p̂̄.
        let z = -(&pi * &state.p_bar);
        // K_k z = κ_k M_k C_kᵀ Q_k z with C_kᵀ Q_k z = [π Q z; 0].
        let mut cqz = DVector::zeros(2 * d);
        cqz.rows_mut(0, d).copy_from(&(&pi * (&self.gains.q * &z)));
        let kz = self.gains.kappa * &m * cqz;

        let mut dp = state.v_bar.clone();
        dp += kz.rows(0, d);
        let mut dv = u_bar.clone();
        dv += kz.rows(d, d);

        // Ṁ = AM + MAᵀ − M CᵀQC M + S with CᵀQC = [[πQπ, 0], [0, 0]].
        let mut ctqc = DMatrix::zeros(2 * d, 2 * d);
        ctqc.view_mut((0, 0), (d, d))
            .copy_from(&(&pi * &self.gains.q * &pi));
        let dm = &self.a * &m + &m * self.a.transpose() - &m * ctqc * &m + &self.gains.s;
        Ok(EdgeState {
            p_bar: dp,
            v_bar: dv,
            m: dm,
        })
    }

    /// Abort if M_k has (numerically) lost definiteness.
    pub fn check_conditioning(&self, m: &DMatrix<f64>, t: f64) -> Result<f64> {
        let lambda_min = linalg::lambda_min(m);
        if lambda_min < MIN_RICCATI_EIGENVALUE {
            return Err(Error::IllConditioned {
                observer: self.label(),
                t,
                lambda_min,
            });
        }
        Ok(lambda_min)
    }

    /// Advance one RK4 step with the bearing and input frozen; M_k is
    /// symmetrized afterwards.
    pub fn step(
        &self,
        state: &EdgeState,
        g_m: &DVector<f64>,
        u_bar: &DVector<f64>,
        t: f64,
        dt: f64,
    ) -> Result<EdgeState> {
        self.check_conditioning(&state.m, t)?;
        let d = self.d;
        let next = dynamics::rk4_step(t, &state.flatten(), dt, |_, xs| {
            Ok(self
                .derivative(&EdgeState::unflatten(d, xs.as_slice()), g_m, u_bar)?
                .flatten())
        })?;
        let mut out = EdgeState::unflatten(d, next.as_slice());
        linalg::symmetrize(&mut out.m);
        Ok(out)
    }
}

/// Relative input ū_k = u_j − u_i of edge k in its stored orientation.
pub fn edge_input(g: &FormationGraph, k: usize, u: &[DVector<f64>]) -> DVector<f64> {
    let (i, j) = g.edges()[k];
    &u[j] - &u[i]
}

/// Gains of the distributed fusion level.
#[derive(Debug, Clone, Copy)]
pub struct DistributedGains {
    /// Position correction gain κ_o1 > 0.
    pub kappa_o1: f64,
    /// Velocity correction gain κ_o2 > 0.
    pub kappa_o2: f64,
    /// Apply the leader correction with unit gain instead of κ_o1/κ_o2
    /// (compatibility switch for the expanded per-agent form).
    pub leader_unit_gain: bool,
}

impl Default for DistributedGains {
    fn default() -> Self {
        Self {
            kappa_o1: 10.0,
            kappa_o2: 5.0,
            leader_unit_gain: false,
        }
    }
}

/// Everything one agent needs to form its fused correction: its own
/// position estimate, its neighbors' broadcast estimates (aligned with
/// the graph's neighbor order), and the freshest relative-position
/// estimates of its incident PE edges in stored orientation.
#[derive(Debug, Clone)]
pub struct CorrectionInputs<'a> {
    pub p_hat_i: &'a DVector<f64>,
    /// p̂_j for each j in `g.neighbors(i)`, same order.
    pub neighbor_p: Vec<&'a DVector<f64>>,
    /// (edge index, p̂̄_k) for incident PE edges.
    pub edge_p: Vec<(usize, &'a DVector<f64>)>,
}

/// The distributed fusion observer.
#[derive(Debug, Clone)]
pub struct DistributedObserver {
    g: FormationGraph,
    leader: Option<usize>,
    /// Sorted indices of the persistently excited edges.
    pe_edges: Vec<usize>,
    gains: DistributedGains,
}

impl DistributedObserver {
    pub fn new(
        g: &FormationGraph,
        leader: Option<usize>,
        pe_edges: &[usize],
        gains: DistributedGains,
    ) -> Result<Self> {
        if gains.kappa_o1 <= 0.0 || gains.kappa_o2 <= 0.0 {
            return Err(Error::Validation(format!(
                "distributed observer gains must be positive (κ_o1 = {}, κ_o2 = {})",
                gains.kappa_o1, gains.kappa_o2
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
        let mut pe = pe_edges.to_vec();
        pe.sort_unstable();
        pe.dedup();
        if let Some(&k) = pe.iter().find(|&&k| k >= g.m()) {
            return Err(Error::Validation(format!(
                "PE edge index {k} out of range; graph has {} edges",
                g.m()
            )));
        }
        Ok(Self {
            g: g.clone(),
            leader,
            pe_edges: pe,
            gains,
        })
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.g
    }

    pub fn pe_edges(&self) -> &[usize] {
        &self.pe_edges
    }

    pub fn is_pe(&self, k: usize) -> bool {
        self.pe_edges.binary_search(&k).is_ok()
    }

    pub fn gains(&self) -> &DistributedGains {
        &self.gains
    }

    /// Fused correction c_i = Σ_{j∈N_i} σ_ij (r̂_ij − (p̂_i − p̂_j)).
    ///
    /// On a PE edge σ_ij = I_d and r̂_ij is the edge observer's estimate of
    /// p_i − p_j, i.e. the stored p̂̄_k negated when the edge is stored as
    /// (i, j). On the remaining edges σ_ij = π_{g^m_ij} and r̂_ij = 0, so
    /// only the measured bearing weights the consensus residual.
    pub fn fused_correction(
        &self,
        i: usize,
        inputs: &CorrectionInputs,
        meas: &BearingSnapshot,
    ) -> Result<DVector<f64>> {
        let d = self.g.d();
        let neighbors = self.g.neighbors(i);
        if inputs.neighbor_p.len() != neighbors.len() {
            return Err(Error::Validation(format!(
                "agent {} has {} neighbors but {} neighbor estimates were supplied",
                i + 1,
                neighbors.len(),
                inputs.neighbor_p.len()
            )));
        }
        let mut c = DVector::zeros(d);
        for (slot, &j) in neighbors.iter().enumerate() {
            let (k, flipped) = self.g.edge_between(i, j).expect("neighbor without edge");
            let diff = inputs.p_hat_i - inputs.neighbor_p[slot];
            if self.is_pe(k) {
                let p_bar = inputs
                    .edge_p
                    .iter()
                    .find(|(kk, _)| *kk == k)
                    .map(|(_, p)| *p)
                    .ok_or_else(|| {
                        let (a, b) = self.g.edge_one_based(k);
                        Error::Validation(format!(
                            "no relative-state estimate supplied for PE edge ({a},{b})"
                        ))
                    })?;
                // Stored p̂̄_k estimates p_terminal − p_initial.
                let r_ij = if flipped { p_bar.clone() } else { -p_bar };
                c += r_ij - diff;
            } else {
                let pi = analysis::projector(meas.require(&self.g, k)?)?;
                c -= pi * diff;
            }
        }
        Ok(c)
    }

    /// Assemble [`CorrectionInputs`] for agent i from a communication round
    /// plus the agent's own locally-run edge observers.
    pub fn inputs_from_round<'a>(
        &self,
        i: usize,
        p_hat_i: &'a DVector<f64>,
        round: &'a Round,
        own_edges: &'a [(usize, DVector<f64>)],
    ) -> Result<CorrectionInputs<'a>> {
        let mut neighbor_p = Vec::new();
        let mut edge_p: Vec<(usize, &'a DVector<f64>)> = Vec::new();
        for &j in self.g.neighbors(i) {
            let msg = round.from(i, j)?;
            neighbor_p.push(&msg.p_hat);
            let (k, _) = self.g.edge_between(i, j).expect("neighbor without edge");
            if self.is_pe(k) {
                let (a, _) = self.g.edges()[k];
                let estimate = if a == i {
                    own_edges.iter().find(|(kk, _)| *kk == k).map(|(_, p)| p)
                } else {
                    msg.edge_estimates
                        .iter()
                        .find(|(kk, _)| *kk == k)
                        .map(|(_, p)| p)
                };
                let estimate = estimate.ok_or_else(|| {
                    let (a1, b1) = self.g.edge_one_based(k);
                    Error::Validation(format!(
                        "no relative-state estimate available for PE edge ({a1},{b1})"
                    ))
                })?;
                edge_p.push((k, estimate));
            }
        }
        Ok(CorrectionInputs {
            p_hat_i,
            neighbor_p,
            edge_p,
        })
    }

    /// Time derivative of agent i's estimate given its fused correction and,
    /// for the leader, the measured own-position error p₁^m − p̂₁.
    pub fn agent_derivative(
        &self,
        i: usize,
        v_hat_i: &DVector<f64>,
        u_i: &DVector<f64>,
        c_i: &DVector<f64>,
        leader_err: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let is_leader = self.leader == Some(i);
        if is_leader && leader_err.is_none() {
            return Err(Error::Validation(
                "leader agent update needs its measured position error".into(),
            ));
        }
        if !is_leader && leader_err.is_some() {
            return Err(Error::Validation(format!(
                "agent {} is not the leader but received a leader correction",
                i + 1
            )));
        }
        let zero = DVector::zeros(self.g.d());
        let e = leader_err.unwrap_or(&zero);
        let (gp, gv) = if self.gains.leader_unit_gain {
            (1.0, 1.0)
        } else {
            (self.gains.kappa_o1, self.gains.kappa_o2)
        };
        let dp = v_hat_i + self.gains.kappa_o1 * c_i + gp * e;
        let dv = u_i + self.gains.kappa_o2 * c_i + gv * e;
        Ok((dp, dv))
    }

    /// Advance every agent's estimate one RK4 step with the corrections
    /// frozen over the step; the leader term tracks the integrating estimate
    /// through the stages.
    pub fn distributed_step(
        &self,
        estimates: &[AgentState],
        corrections: &[DVector<f64>],
        leader_p_meas: Option<&DVector<f64>>,
        u: &[DVector<f64>],
        t: f64,
        dt: f64,
    ) -> Result<Vec<AgentState>> {
        let (n, d) = (self.g.n(), self.g.d());
        if estimates.len() != n || corrections.len() != n || u.len() != n {
            return Err(Error::Validation(
                "estimates, corrections, and inputs must cover every agent".into(),
            ));
        }
        if self.leader.is_some() && leader_p_meas.is_none() {
            return Err(Error::Validation(
                "distributed step needs the leader position measurement".into(),
            ));
        }
        let nd = n * d;
        let mut x0 = DVector::zeros(2 * nd);
        for (i, s) in estimates.iter().enumerate() {
            x0.rows_mut(i * d, d).copy_from(&s.p);
            x0.rows_mut(nd + i * d, d).copy_from(&s.v);
        }
        let next = dynamics::rk4_step(t, &x0, dt, |_, x| {
            let mut dx = DVector::zeros(2 * nd);
            for i in 0..n {
                let p_i = x.rows(i * d, d).clone_owned();
                let v_i = x.rows(nd + i * d, d).clone_owned();
                let leader_err = if self.leader == Some(i) {
                    Some(leader_p_meas.expect("leader measurement checked above") - &p_i)
                } else {
                    None
                };
                let (dp, dv) =
                    self.agent_derivative(i, &v_i, &u[i], &corrections[i], leader_err.as_ref())?;
                dx.rows_mut(i * d, d).copy_from(&dp);
                dx.rows_mut(nd + i * d, d).copy_from(&dv);
            }
            Ok(dx)
        })?;
        Ok((0..n)
            .map(|i| {
                AgentState::new(
                    next.rows(i * d, d).clone_owned(),
                    next.rows(nd + i * d, d).clone_owned(),
                )
            })
            .collect())
    }
}

/// Information-content state counts backing the complexity comparison:
/// each edge observer carries 2d relative-state entries plus the d(2d+1)
/// independent entries of its symmetric M_k; the fusion level adds 2dn.
pub fn decentralized_state_count(d: usize, n: usize, m_pe: usize) -> usize {
    m_pe * (2 * d + d * (2 * d + 1)) + 2 * d * n
}

/// Centralized observer information content: the 2dn estimate entries plus
/// the dn(2dn+1) independent entries of the symmetric 2dn×2dn Riccati
/// matrix.
pub fn centralized_state_count(d: usize, n: usize) -> usize {
    2 * d * n + d * n * (2 * d * n + 1)
}
