//! Simulation engine: one scenario in, a trajectory trace and a metrics
//! summary out.
//!
//! The plant, the active observers, and (in control modes) the feedback loop
//! are integrated as one coupled ODE with fixed-step RK4: every stage
//! recomputes the true bearings from the stage positions, measurement noise
//! is drawn once per step and held across stages, and estimate feedback
//! enters the plant at stage resolution. With a communication delay the
//! distributed corrections instead read a frozen round of delayed neighbor
//! messages, held over the whole step.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::analysis::{self, BearingSnapshot, PeReport};
use crate::controller::{self, ControlGains, FeedbackSource};
use crate::dynamics::{self, ReferenceSample, ReferenceTrajectory};
use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::linalg;
use crate::network::{Bus, EstimateMessage, Round};
use crate::observer::centralized::{CentralizedObserver, CentralizedState};
use crate::observer::decentralized::{
    edge_input, CorrectionInputs, DistributedObserver, EdgeObserver, EdgeState,
};
use crate::observer::MIN_RICCATI_EIGENVALUE;
use crate::scenario::Scenario;
use crate::sensing::{apply_noise, EdgeNoise, NoiseModel};

/// Cap on the number of snapshots fed to the excitation analysis; longer
/// traces are subsampled uniformly to keep the report cheap.
const PE_MAX_SAMPLES: usize = 3001;

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// A rectangular table of per-step records with named columns.
///
/// Column order: t; per-agent positions, velocities, position estimates,
/// velocity estimates, applied accelerations (componentwise, agents grouped
/// per field); per-PE-edge estimation error norms (position, velocity); the
/// aggregates `delta_p`, `delta_v`, `p_tilde`, `v_tilde`, `lambda_min_m`,
/// `min_edge_dist`. In modes without estimates the estimate columns mirror
/// the true states and `lambda_min_m` is NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::TraceFormat(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of one column, by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Write as CSV: one header row, shortest-round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{}", self.columns.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("write float to string");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::TraceFormat("empty trace file".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut trace = Trace::new(columns);
        for (ln, raw) in lines.enumerate() {
            if raw.is_empty() {
                continue;
            }
            let row = raw
                .split(',')
                .map(|v| {
                    f64::from_str(v).map_err(|_| {
                        Error::TraceFormat(format!("line {}: bad number {v:?}", ln + 2))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != trace.columns.len() {
                return Err(Error::TraceFormat(format!(
                    "line {}: {} values for {} columns",
                    ln + 2,
                    row.len(),
                    trace.columns.len()
                )));
            }
            trace.rows.push(row);
        }
        Ok(trace)
    }

    /// Exact equality, treating NaN as equal to NaN (bit comparison).
    pub fn bitwise_eq(&self, other: &Trace) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Why and when a run stopped before its scheduled duration.
#[derive(Debug, Clone, Serialize)]
pub struct AbortInfo {
    pub t: f64,
    pub message: String,
    pub exit_code: i32,
}

impl AbortInfo {
    /// Runtime errors embed the exact failure time (an RK4 stage may fail
    /// mid-step); fall back to the step time otherwise.
    fn new(e: &Error, step_t: f64) -> Self {
        let t = match e {
            Error::DegenerateBearing { t, .. }
            | Error::IllConditioned { t, .. }
            | Error::NonFinite { t, .. } => *t,
            _ => step_t,
        };
        Self {
            t,
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

/// Summary of one run, serialized to JSON next to the trace.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub steps_completed: usize,
    /// Last recorded time (shorter than the scenario duration on abort).
    pub simulated: f64,
    pub final_delta_p: f64,
    pub final_delta_v: f64,
    /// Combined estimation error ‖(δ_p, δ_v)‖ at the last record.
    pub final_delta: f64,
    pub final_p_tilde: f64,
    pub final_v_tilde: f64,
    /// Combined tracking error ‖(p̃, ṽ)‖ at the last record.
    pub final_tracking: f64,
    /// Least-squares slope of log‖δ‖ (1/s), observer modes only.
    pub decay_rate_delta: Option<f64>,
    /// Least-squares slope of log‖x̃‖ (1/s), control modes only.
    pub decay_rate_tracking: Option<f64>,
    /// Largest one-step increase of the observer Lyapunov function
    /// δᵀM⁻¹δ (centralized) or Σ_k δ̄_kᵀM_k⁻¹δ̄_k (edge level).
    pub lyapunov_max_increase: Option<f64>,
    pub riccati_lambda_min_final: Option<f64>,
    pub min_edge_distance: f64,
    /// Excitation classification of the achieved trajectory.
    pub pe_report: Option<PeReport>,
    pub warnings: Vec<String>,
    pub abort: Option<AbortInfo>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize to JSON")
    }
}

/// Everything `run` produces: the resolved scenario, the per-step trace, and
/// the metrics summary (which carries any abort).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub trace: Trace,
    pub metrics: Metrics,
}

/// Least-squares slope of ln(norms) against t, skipping the first
/// `skip_fraction` of the samples and any non-positive or non-finite values.
/// Returns None with fewer than two usable points.
pub fn fit_decay_rate(t: &[f64], norms: &[f64], skip_fraction: f64) -> Option<f64> {
    let n = t.len().min(norms.len());
    let start = ((n as f64) * skip_fraction).floor() as usize;
    let pts: Vec<(f64, f64)> = (start..n)
        .filter(|&i| norms[i].is_finite() && norms[i] > 0.0 && t[i].is_finite())
        .map(|i| (t[i], norms[i].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let var: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if var <= 0.0 {
        return None;
    }
    let cov: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    Some(cov / var)
}

// ---------------------------------------------------------------------------
// Joint state layout
// ---------------------------------------------------------------------------

/// Offsets into the flat joint state.
///
/// Order: plant positions (nd) | plant velocities (nd) | estimate positions
/// (nd) | estimate velocities (nd) | centralized Riccati matrix, column-major
/// | per-PE-edge blocks [p̂̄ | v̂̄ | M_k]. Estimate and observer blocks exist
/// only in the modes that use them.
#[derive(Debug, Clone)]
struct Layout {
    n: usize,
    d: usize,
    has_estimates: bool,
    centralized: bool,
    /// Sorted edge indices carrying edge observers.
    pe: Vec<usize>,
}

impl Layout {
    fn nd(&self) -> usize {
        self.n * self.d
    }

    fn est(&self) -> usize {
        2 * self.nd()
    }

    fn cen_m(&self) -> usize {
        self.est() + if self.has_estimates { 2 * self.nd() } else { 0 }
    }

    fn cen_m_len(&self) -> usize {
        if self.centralized {
            4 * self.nd() * self.nd()
        } else {
            0
        }
    }

    fn edge(&self, e: usize) -> usize {
        self.cen_m() + self.cen_m_len() + e * EdgeState::dim(self.d)
    }

    fn total(&self) -> usize {
        self.edge(self.pe.len())
    }
}

fn read_vec(x: &DVector<f64>, base: usize, len: usize) -> DVector<f64> {
    DVector::from_column_slice(&x.as_slice()[base..base + len])
}

fn agent_vecs(x: &DVector<f64>, base: usize, n: usize, d: usize) -> Vec<DVector<f64>> {
    (0..n).map(|i| read_vec(x, base + i * d, d)).collect()
}

fn write_vec(x: &mut DVector<f64>, base: usize, v: &DVector<f64>) {
    x.rows_mut(base, v.len()).copy_from(v);
}

fn read_mat(x: &DVector<f64>, base: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(k, k, &x.as_slice()[base..base + k * k])
}

fn write_mat(x: &mut DVector<f64>, base: usize, m: &DMatrix<f64>) {
    x.rows_mut(base, m.len()).copy_from_slice(m.as_slice());
}

fn stack2(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct Engine {
    sc: Scenario,
    g: FormationGraph,
    reference: ReferenceTrajectory,
    layout: Layout,
    noise_model: NoiseModel,
    cen: Option<CentralizedObserver>,
    dec: Option<DistributedObserver>,
    /// Edge observers aligned with `layout.pe`.
    edge_obs: Vec<EdgeObserver>,
    control_gains: Option<ControlGains>,
    leader: Option<usize>,
}

/// Riccati spectra sampled when a row is recorded; gate the next step.
struct RowStats {
    lambda_cen: Option<f64>,
    lambda_edges: Vec<f64>,
}

impl Engine {
    fn new(sc: &Scenario) -> Result<Self> {
        let g = sc.graph()?;
        let reference = sc.reference()?;
        let runs_cen = sc.runs_centralized();
        let runs_dec = sc.runs_decentralized();
        let pe = if runs_dec {
            sc.pe_edge_indices(&g)?
        } else {
            Vec::new()
        };
        let cen = if runs_cen {
            Some(sc.centralized_observer(&g)?)
        } else {
            None
        };
        let dec = if runs_dec {
            Some(sc.distributed_observer(&g)?)
        } else {
            None
        };
        let edge_obs = pe
            .iter()
            .map(|&k| sc.edge_observer(&g, k))
            .collect::<Result<Vec<_>>>()?;
        let control_gains = if sc.mode.is_control() {
            Some(sc.control_gains()?)
        } else {
            None
        };
        let layout = Layout {
            n: sc.n,
            d: sc.d,
            has_estimates: runs_cen || runs_dec,
            centralized: runs_cen,
            pe,
        };
        Ok(Self {
            sc: sc.clone(),
            g,
            reference,
            layout,
            noise_model: sc.noise_model(),
            cen,
            dec,
            edge_obs,
            control_gains,
            leader: sc.leader_index(),
        })
    }

    fn initial_state(&self) -> Result<DVector<f64>> {
        let lay = &self.layout;
        let (d, nd) = (lay.d, lay.nd());
        let mut x = DVector::zeros(lay.total());
        let truth = self.sc.initial_true()?;
        for (i, s) in truth.iter().enumerate() {
            write_vec(&mut x, i * d, &s.p);
            write_vec(&mut x, nd + i * d, &s.v);
        }
        if lay.has_estimates {
            let est = self.sc.initial_estimates()?;
            for (i, s) in est.iter().enumerate() {
                write_vec(&mut x, lay.est() + i * d, &s.p);
                write_vec(&mut x, lay.est() + nd + i * d, &s.v);
            }
            if lay.centralized {
                write_mat(&mut x, lay.cen_m(), &self.sc.centralized_m0()?);
            }
            // Edge observers start from the differences of the node
            // estimates, so both levels agree at t = 0.
            let m0 = self.sc.edge_m0()?;
            for (e, &k) in lay.pe.iter().enumerate() {
                let (i, j) = self.g.edges()[k];
                write_vec(&mut x, lay.edge(e), &(&est[j].p - &est[i].p));
                write_vec(&mut x, lay.edge(e) + d, &(&est[j].v - &est[i].v));
                write_mat(&mut x, lay.edge(e) + 2 * d, &m0);
            }
        }
        Ok(x)
    }

    /// Estimates in the joint state, or the true states in modes without
    /// estimates (the trace mirrors truth there).
    fn estimates(
        &self,
        x: &DVector<f64>,
        p: &[DVector<f64>],
        v: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let lay = &self.layout;
        if lay.has_estimates {
            (
                agent_vecs(x, lay.est(), lay.n, lay.d),
                agent_vecs(x, lay.est() + lay.nd(), lay.n, lay.d),
            )
        } else {
            (p.to_vec(), v.to_vec())
        }
    }

    /// Acceleration each agent applies right now: tracking feedback in
    /// control modes (fed by the configured source), reference feedforward
    /// otherwise.
    fn applied_u(
        &self,
        p: &[DVector<f64>],
        v: &[DVector<f64>],
        p_hat: &[DVector<f64>],
        v_hat: &[DVector<f64>],
        sample: &ReferenceSample,
    ) -> Vec<DVector<f64>> {
        match &self.control_gains {
            Some(gains) => {
                let (pf, vf) = match self.sc.feedback {
                    FeedbackSource::Truth => (p, v),
                    _ => (p_hat, v_hat),
                };
                (0..p.len())
                    .map(|i| controller::control(i, &pf[i], &vf[i], sample, gains))
                    .collect()
            }
            None => sample.u.clone(),
        }
    }

    /// Time derivative of the whole joint state at one RK4 stage.
    fn derivative(
        &self,
        t: f64,
        x: &DVector<f64>,
        draws: &[DVector<f64>],
        round: Option<&Round>,
    ) -> Result<DVector<f64>> {
        let lay = &self.layout;
        let (n, d, nd) = (lay.n, lay.d, lay.nd());
        let p = agent_vecs(x, 0, n, d);
        let v = agent_vecs(x, nd, n, d);
        let truth = analysis::bearings(&self.g, &p, t)?;
        let mut meas = BearingSnapshot::new(t, self.g.m());
        debug_assert_eq!(draws.len(), self.g.m());
        for (k, w) in draws.iter().enumerate() {
            let g_k = truth.get(k).expect("true bearing");
            meas.set(k, apply_noise(&self.noise_model, g_k, w)?);
        }
        let sample = self.reference.sample(t);
        let (p_hat, v_hat) = self.estimates(x, &p, &v);
        let u = self.applied_u(&p, &v, &p_hat, &v_hat, &sample);

        let mut dx = DVector::zeros(lay.total());
        for i in 0..n {
            write_vec(&mut dx, i * d, &v[i]);
            write_vec(&mut dx, nd + i * d, &u[i]);
        }

        if let Some(cen) = &self.cen {
            let state = CentralizedState {
                p_hat: read_vec(x, lay.est(), nd),
                v_hat: read_vec(x, lay.est() + nd, nd),
                m: read_mat(x, lay.cen_m(), 2 * nd),
            };
            let leader_p = self.leader.map(|l| p[l].clone());
            let deriv = cen.derivative(&state, &meas, leader_p.as_ref(), &u)?;
            write_vec(&mut dx, lay.est(), &deriv.p_hat);
            write_vec(&mut dx, lay.est() + nd, &deriv.v_hat);
            write_mat(&mut dx, lay.cen_m(), &deriv.m);
        }

        if let Some(dec) = &self.dec {
            // Edge observers first; keep their stage relative-position
            // estimates around for the fusion corrections.
            let mut edge_p: Vec<(usize, DVector<f64>)> = Vec::with_capacity(lay.pe.len());
            for (e, &k) in lay.pe.iter().enumerate() {
                let st = EdgeState::unflatten(d, &x.as_slice()[lay.edge(e)..lay.edge(e + 1)]);
                let g_m = meas.get(k).expect("measured bearing");
                let u_bar = match round {
                    // Instantaneous exchange: both endpoint inputs are known.
                    None => edge_input(&self.g, k, &u),
                    // Delayed exchange: the owning endpoint knows its own
                    // input live and the neighbor's from the round.
                    Some(r) => {
                        let (i0, j0) = self.g.edges()[k];
                        &r.from(i0, j0)?.u - &u[i0]
                    }
                };
                let dstate = self.edge_obs[e].derivative(&st, g_m, &u_bar)?;
                write_vec(&mut dx, lay.edge(e), &dstate.p_bar);
                write_vec(&mut dx, lay.edge(e) + d, &dstate.v_bar);
                write_mat(&mut dx, lay.edge(e) + 2 * d, &dstate.m);
                edge_p.push((k, st.p_bar));
            }
            for i in 0..n {
                let c = match round {
                    None => {
                        let inputs = CorrectionInputs {
                            p_hat_i: &p_hat[i],
                            neighbor_p: self.g.neighbors(i).iter().map(|&j| &p_hat[j]).collect(),
                            edge_p: edge_p.iter().map(|(k, pb)| (*k, pb)).collect(),
                        };
                        dec.fused_correction(i, &inputs, &meas)?
                    }
                    Some(r) => {
                        let own: Vec<(usize, DVector<f64>)> = edge_p
                            .iter()
                            .filter(|(k, _)| self.g.edges()[*k].0 == i)
                            .cloned()
                            .collect();
                        let inputs = dec.inputs_from_round(i, &p_hat[i], r, &own)?;
                        dec.fused_correction(i, &inputs, &meas)?
                    }
                };
                let leader_err = if self.leader == Some(i) {
                    Some(&p[i] - &p_hat[i])
                } else {
                    None
                };
                let (dp, dv) =
                    dec.agent_derivative(i, &v_hat[i], &u[i], &c, leader_err.as_ref())?;
                write_vec(&mut dx, lay.est() + i * d, &dp);
                write_vec(&mut dx, lay.est() + nd + i * d, &dv);
            }
        }

        Ok(dx)
    }

    /// Symmetrize all Riccati blocks after a step.
    fn post_step(&self, x: &mut DVector<f64>) {
        let lay = &self.layout;
        if lay.centralized {
            let k = 2 * lay.nd();
            let mut m = read_mat(x, lay.cen_m(), k);
            linalg::symmetrize(&mut m);
            write_mat(x, lay.cen_m(), &m);
        }
        for e in 0..lay.pe.len() {
            let base = lay.edge(e) + 2 * lay.d;
            let mut m = read_mat(x, base, 2 * lay.d);
            linalg::symmetrize(&mut m);
            write_mat(x, base, &m);
        }
    }

    /// Messages every agent posts right now (estimates, input, owned edge
    /// estimates). The owner of an edge is its initial endpoint.
    fn outgoing(&self, t: f64, x: &DVector<f64>) -> Vec<EstimateMessage> {
        let lay = &self.layout;
        let (n, d, nd) = (lay.n, lay.d, lay.nd());
        let p = agent_vecs(x, 0, n, d);
        let v = agent_vecs(x, nd, n, d);
        let (p_hat, v_hat) = self.estimates(x, &p, &v);
        let sample = self.reference.sample(t);
        let u = self.applied_u(&p, &v, &p_hat, &v_hat, &sample);
        (0..n)
            .map(|i| EstimateMessage {
                sender: i,
                t,
                p_hat: p_hat[i].clone(),
                v_hat: v_hat[i].clone(),
                u: u[i].clone(),
                edge_estimates: lay
                    .pe
                    .iter()
                    .enumerate()
                    .filter(|&(_, &k)| self.g.edges()[k].0 == i)
                    .map(|(e, &k)| (k, read_vec(x, lay.edge(e), d)))
                    .collect(),
            })
            .collect()
    }

    /// Record the state at time t as one trace row; also returns the Riccati
    /// spectra so the caller can gate the next step, and appends the bearing
    /// snapshot and Lyapunov value.
    fn record(
        &self,
        t: f64,
        x: &DVector<f64>,
        trace: &mut Trace,
        snapshots: &mut Vec<BearingSnapshot>,
        lyapunov: &mut Vec<f64>,
    ) -> Result<RowStats> {
        let lay = &self.layout;
        let (n, d, nd) = (lay.n, lay.d, lay.nd());
        let p = agent_vecs(x, 0, n, d);
        let v = agent_vecs(x, nd, n, d);
        let snap = analysis::bearings(&self.g, &p, t)?;
        let sample = self.reference.sample(t);
        let (p_hat, v_hat) = self.estimates(x, &p, &v);
        let u = self.applied_u(&p, &v, &p_hat, &v_hat, &sample);

        let mut row = Vec::with_capacity(trace.columns.len());
        row.push(t);
        for field in [&p, &v, &p_hat, &v_hat, &u] {
            for a in field.iter() {
                row.extend(a.iter());
            }
        }
        for (e, &k) in lay.pe.iter().enumerate() {
            let (i, j) = self.g.edges()[k];
            let p_bar = &p[j] - &p[i];
            let v_bar = &v[j] - &v[i];
            row.push((&p_bar - read_vec(x, lay.edge(e), d)).norm());
            row.push((&v_bar - read_vec(x, lay.edge(e) + d, d)).norm());
        }
        let sum_sq = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).norm_squared())
                .sum::<f64>()
                .sqrt()
        };
        let delta_p = sum_sq(&p, &p_hat);
        let delta_v = sum_sq(&v, &v_hat);
        let p_tilde = sum_sq(&p, &sample.p);
        let v_tilde = sum_sq(&v, &sample.v);

        let mut lambda_cen = None;
        let mut lambda_edges = Vec::with_capacity(lay.pe.len());
        let mut lambda_col = f64::NAN;
        if lay.centralized {
            let lam = linalg::lambda_min(&read_mat(x, lay.cen_m(), 2 * nd));
            lambda_cen = Some(lam);
            lambda_col = lam;
        }
        for e in 0..lay.pe.len() {
            let lam = linalg::lambda_min(&read_mat(x, lay.edge(e) + 2 * d, 2 * d));
            lambda_edges.push(lam);
            lambda_col = lambda_col.min(lam);
        }
        let min_dist = self
            .g
            .edges()
            .iter()
            .map(|&(i, j)| (&p[j] - &p[i]).norm())
            .fold(f64::INFINITY, f64::min);

        row.push(delta_p);
        row.push(delta_v);
        row.push(p_tilde);
        row.push(v_tilde);
        row.push(lambda_col);
        row.push(min_dist);
        trace.push(row)?;

        let mut value = f64::NAN;
        if lay.centralized {
            let delta = stack2(
                &(read_vec(x, 0, nd) - read_vec(x, lay.est(), nd)),
                &(read_vec(x, nd, nd) - read_vec(x, lay.est() + nd, nd)),
            );
            if let Some(chol) = Cholesky::new(read_mat(x, lay.cen_m(), 2 * nd)) {
                value = delta.dot(&chol.solve(&delta));
            }
        } else if !lay.pe.is_empty() {
            value = 0.0;
            for (e, &k) in lay.pe.iter().enumerate() {
                let (i, j) = self.g.edges()[k];
                let delta = stack2(
                    &(&p[j] - &p[i] - read_vec(x, lay.edge(e), d)),
                    &(&v[j] - &v[i] - read_vec(x, lay.edge(e) + d, d)),
                );
                match Cholesky::new(read_mat(x, lay.edge(e) + 2 * d, 2 * d)) {
                    Some(chol) => value += delta.dot(&chol.solve(&delta)),
                    None => {
                        value = f64::NAN;
                        break;
                    }
                }
            }
        }
        lyapunov.push(value);
        snapshots.push(snap);
        Ok(RowStats {
            lambda_cen,
            lambda_edges,
        })
    }

    fn trace_columns(&self) -> Vec<String> {
        let lay = &self.layout;
        let mut cols = vec!["t".to_string()];
        for field in ["p", "v", "phat", "vhat", "u"] {
            for a in 1..=lay.n {
                for c in 0..lay.d {
                    cols.push(format!("{field}{a}_{c}"));
                }
            }
        }
        for &k in &lay.pe {
            let (i, j) = self.g.edge_one_based(k);
            cols.push(format!("edge{i}_{j}_ep"));
            cols.push(format!("edge{i}_{j}_ev"));
        }
        for agg in [
            "delta_p",
            "delta_v",
            "p_tilde",
            "v_tilde",
            "lambda_min_m",
            "min_edge_dist",
        ] {
            cols.push(agg.to_string());
        }
        cols
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Validate and execute a scenario.
///
/// Configuration problems return Err before anything runs. Runtime aborts
/// (degenerate bearings, ill-conditioned Riccati matrices, non-finite
/// states, missing messages) stop the loop early and are recorded in
/// `metrics.abort`; the partial trace is kept.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    let warnings = sc.validate()?;
    let engine = Engine::new(sc)?;
    let steps = (sc.duration / sc.dt).round().max(1.0) as usize;
    let mut x = engine.initial_state()?;
    let mut noise = EdgeNoise::new(sc.noise_model(), &engine.g)?;
    let mut bus = if sc.delay > 0 && engine.dec.is_some() {
        Some(Bus::with_delay(sc.n, sc.delay, &engine.outgoing(0.0, &x)))
    } else {
        None
    };

    let mut trace = Trace::new(engine.trace_columns());
    let mut snapshots: Vec<BearingSnapshot> = Vec::with_capacity(steps + 1);
    let mut lyapunov: Vec<f64> = Vec::with_capacity(steps + 1);
    let mut abort: Option<AbortInfo> = None;

    'main: for step in 0..=steps {
        let t = step as f64 * sc.dt;
        let stats = match engine.record(t, &x, &mut trace, &mut snapshots, &mut lyapunov) {
            Ok(s) => s,
            Err(e) => {
                abort = Some(AbortInfo::new(&e, t));
                break;
            }
        };
        if step == steps {
            break;
        }
        // Riccati conditioning is gated on entry to the step: the process
        // noise term replenishes the spectrum within the step, so a
        // post-step check could never fire.
        if let Some(lam) = stats.lambda_cen {
            if lam < MIN_RICCATI_EIGENVALUE {
                let e = Error::IllConditioned {
                    observer: "centralized".into(),
                    t,
                    lambda_min: lam,
                };
                abort = Some(AbortInfo::new(&e, t));
                break;
            }
        }
        for (e_idx, &lam) in stats.lambda_edges.iter().enumerate() {
            if lam < MIN_RICCATI_EIGENVALUE {
                let (i, j) = engine.g.edge_one_based(engine.layout.pe[e_idx]);
                let e = Error::IllConditioned {
                    observer: format!("edge ({i},{j})"),
                    t,
                    lambda_min: lam,
                };
                abort = Some(AbortInfo::new(&e, t));
                break 'main;
            }
        }
        let round = match &mut bus {
            Some(b) => match b.exchange(&engine.g, engine.outgoing(t, &x), t) {
                Ok(r) => Some(r),
                Err(e) => {
                    abort = Some(AbortInfo::new(&e, t));
                    break;
                }
            },
            None => None,
        };
        let draws = noise.draw();
        match dynamics::rk4_step(t, &x, sc.dt, |ts, xs| {
            engine.derivative(ts, xs, &draws, round.as_ref())
        }) {
            Ok(mut next) => {
                engine.post_step(&mut next);
                if !next.iter().all(|a| a.is_finite()) {
                    let e = Error::NonFinite {
                        what: "joint simulation state".into(),
                        t: t + sc.dt,
                    };
                    abort = Some(AbortInfo::new(&e, t + sc.dt));
                    break;
                }
                x = next;
            }
            Err(e) => {
                abort = Some(AbortInfo::new(&e, t));
                break;
            }
        }
    }

    let metrics = build_metrics(sc, &engine, &trace, &snapshots, &lyapunov, warnings, abort);
    Ok(RunOutput {
        scenario: sc.clone(),
        trace,
        metrics,
    })
}

fn build_metrics(
    sc: &Scenario,
    engine: &Engine,
    trace: &Trace,
    snapshots: &[BearingSnapshot],
    lyapunov: &[f64],
    mut warnings: Vec<String>,
    abort: Option<AbortInfo>,
) -> Metrics {
    let value = |name: &str| -> f64 {
        trace
            .column_index(name)
            .and_then(|i| trace.rows().last().map(|r| r[i]))
            .unwrap_or(f64::NAN)
    };
    let final_delta_p = value("delta_p");
    let final_delta_v = value("delta_v");
    let final_p_tilde = value("p_tilde");
    let final_v_tilde = value("v_tilde");
    let ts = trace.column("t").unwrap_or_default();

    let combined = |a: &str, b: &str| -> Vec<f64> {
        let (ia, ib) = match (trace.column_index(a), trace.column_index(b)) {
            (Some(ia), Some(ib)) => (ia, ib),
            _ => return Vec::new(),
        };
        trace.rows().iter().map(|r| r[ia].hypot(r[ib])).collect()
    };
    let delta_series = combined("delta_p", "delta_v");
    let tracking_series = combined("p_tilde", "v_tilde");
    let decay_rate_delta = if sc.runs_observer() {
        fit_decay_rate(&ts, &delta_series, 0.1)
    } else {
        None
    };
    let decay_rate_tracking = if sc.mode.is_control() {
        fit_decay_rate(&ts, &tracking_series, 0.1)
    } else {
        None
    };

    let mut lyapunov_max_increase = None;
    for w in lyapunov.windows(2) {
        if w[0].is_finite() && w[1].is_finite() {
            let inc = w[1] - w[0];
            lyapunov_max_increase = Some(lyapunov_max_increase.map_or(inc, |m: f64| m.max(inc)));
        }
    }

    let riccati_lambda_min_final = trace
        .column_index("lambda_min_m")
        .and_then(|i| trace.rows().last().map(|r| r[i]))
        .filter(|l| l.is_finite());
    let min_edge_distance = trace
        .column("min_edge_dist")
        .map(|c| c.into_iter().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NAN);

    let pe_report =
        match excitation_report(engine, snapshots, sc.analysis.window, sc.analysis.threshold) {
            Ok(report) => Some(report),
            Err(e) => {
                warnings.push(format!("excitation analysis skipped: {e}"));
                None
            }
        };

    Metrics {
        scenario: sc.name.clone(),
        steps_completed: trace.len().saturating_sub(1),
        simulated: ts.last().copied().unwrap_or(0.0),
        final_delta_p,
        final_delta_v,
        final_delta: final_delta_p.hypot(final_delta_v),
        final_p_tilde,
        final_v_tilde,
        final_tracking: final_p_tilde.hypot(final_v_tilde),
        decay_rate_delta,
        decay_rate_tracking,
        lyapunov_max_increase,
        riccati_lambda_min_final,
        min_edge_distance,
        pe_report,
        warnings,
        abort,
    }
}

fn excitation_report(
    engine: &Engine,
    snapshots: &[BearingSnapshot],
    window: f64,
    threshold: f64,
) -> Result<PeReport> {
    if snapshots.len() < 2 {
        return Err(Error::Validation(
            "need at least two recorded steps for excitation analysis".into(),
        ));
    }
    let stride = snapshots.len().div_ceil(PE_MAX_SAMPLES).max(1);
    let subset: Vec<BearingSnapshot> = snapshots.iter().step_by(stride).cloned().collect();
    analysis::check_bpe(&engine.g, &subset, window, threshold)
}

// ---------------------------------------------------------------------------
// Trace-based analysis (used by the CLI `analyze` subcommand)
// ---------------------------------------------------------------------------

/// Per-row times paired with each row's agent positions.
pub type TimedPositions = (Vec<f64>, Vec<Vec<DVector<f64>>>);

/// Per-row times and agent positions from a trace's `t` and `p{i}_{c}`
/// columns.
pub fn positions_from_trace(trace: &Trace, n: usize, d: usize) -> Result<TimedPositions> {
    let t_idx = trace
        .column_index("t")
        .ok_or_else(|| Error::TraceFormat("trace has no t column".into()))?;
    let mut idx = Vec::with_capacity(n * d);
    for a in 1..=n {
        for c in 0..d {
            let name = format!("p{a}_{c}");
            idx.push(
                trace
                    .column_index(&name)
                    .ok_or_else(|| Error::TraceFormat(format!("trace has no column {name}")))?,
            );
        }
    }
    let mut ts = Vec::with_capacity(trace.len());
    let mut positions = Vec::with_capacity(trace.len());
    for row in trace.rows() {
        ts.push(row[t_idx]);
        positions.push(
            (0..n)
                .map(|a| DVector::from_iterator(d, (0..d).map(|c| row[idx[a * d + c]])))
                .collect::<Vec<_>>(),
        );
    }
    Ok((ts, positions))
}

/// Re-run the excitation classification on a recorded trace.
pub fn pe_report_from_trace(
    trace: &Trace,
    g: &FormationGraph,
    window: f64,
    threshold: f64,
) -> Result<PeReport> {
    let (ts, positions) = positions_from_trace(trace, g.n(), g.d())?;
    if ts.len() < 2 {
        return Err(Error::Validation(
            "need at least two trace rows for excitation analysis".into(),
        ));
    }
    let stride = ts.len().div_ceil(PE_MAX_SAMPLES).max(1);
    let mut snaps = Vec::new();
    for i in (0..ts.len()).step_by(stride) {
        snaps.push(analysis::bearings(g, &positions[i], ts[i])?);
    }
    analysis::check_bpe(g, &snaps, window, threshold)
}
