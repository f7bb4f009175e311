//! Scenario files: everything one simulation run needs, in TOML.
//!
//! A scenario names the dimensions, graph, mode, gains, noise, reference
//! trajectory, initial conditions, and integration parameters. All gain
//! matrices can be written as a bare scalar (meaning scalar·identity) or as
//! explicit row lists. Three built-in scenarios reproduce the benchmark
//! experiments: `paper-centralized`, `paper-decentralized`, and
//! `paper-control`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::controller::{ControlGains, FeedbackSource};
use crate::dynamics::{AgentState, ReferenceTrajectory};
use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::linalg;
use crate::observer::centralized::{CentralizedGains, CentralizedObserver};
use crate::observer::decentralized::{
    DistributedGains, DistributedObserver, EdgeGains, EdgeObserver,
};
use crate::sensing::{NoiseKind, NoiseModel};

/// What the simulation runs and closes the loop with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Agents fly the reference; the centralized observer estimates them.
    CentralizedObserver,
    /// Agents fly the reference; edge observers plus distributed fusion.
    DecentralizedObserver,
    /// Estimates feed the tracking controller, which steers the plant.
    ObserverBasedControl,
    /// The controller is fed true states (ablation baseline).
    TruthFeedbackControl,
}

impl Mode {
    pub fn is_control(self) -> bool {
        matches!(
            self,
            Mode::ObserverBasedControl | Mode::TruthFeedbackControl
        )
    }
}

/// A matrix entered either as scalar·identity or as explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn materialize(&self, dim: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Ok(DMatrix::identity(dim, dim) * *s),
            MatrixSpec::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Validation(format!(
                        "{name} must be a {dim}×{dim} matrix"
                    )));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

/// A per-agent gain entered as one shared scalar or one value per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    PerAgent(Vec<f64>),
}

impl GainSpec {
    pub fn per_agent(&self, n: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            GainSpec::Scalar(s) => Ok(vec![*s; n]),
            GainSpec::PerAgent(v) => {
                if v.len() != n {
                    return Err(Error::Validation(format!(
                        "{name} lists {} values for {n} agents",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Undirected edges as 1-based vertex pairs, in declaration order.
    pub edges: Vec<(usize, usize)>,
    /// Edges declared persistently excited, as 1-based vertex pairs.
    #[serde(default)]
    pub pe_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ReferenceSection {
    /// The benchmark trajectory: a sinusoidally driven leader with three
    /// followers at rest (requires n = 4, d = 3).
    LeaderSine {
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_f")]
        f: f64,
    },
    /// A constant desired formation.
    Static { positions: Vec<Vec<f64>> },
}

fn default_r() -> f64 {
    2.0 * std::f64::consts::SQRT_2
}

fn default_f() -> f64 {
    1.0 / std::f64::consts::TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub magnitude: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            magnitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// True positions; defaults to the reference sampled at t = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    /// True velocities; defaults to the reference sampled at t = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<f64>>>,
    /// Initial position estimates (required in observer modes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<Vec<Vec<f64>>>,
    /// Initial velocity estimates (required in observer modes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_hat: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralizedSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_q")]
    pub q: MatrixSpec,
    #[serde(default = "default_s")]
    pub s: MatrixSpec,
    #[serde(default = "default_m0_one")]
    pub m0: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_q")]
    pub q: MatrixSpec,
    #[serde(default = "default_s")]
    pub s: MatrixSpec,
    #[serde(default = "default_m0_hundred")]
    pub m0: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    #[serde(default = "default_kappa")]
    pub kappa_o1: f64,
    #[serde(default = "default_kappa_o2")]
    pub kappa_o2: f64,
    #[serde(default)]
    pub leader_unit_gain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default = "default_kp")]
    pub kp: GainSpec,
    #[serde(default = "default_kv")]
    pub kv: GainSpec,
}

fn default_kappa() -> f64 {
    10.0
}

fn default_kappa_o2() -> f64 {
    5.0
}

fn default_q() -> MatrixSpec {
    MatrixSpec::Scalar(10.0)
}

fn default_s() -> MatrixSpec {
    MatrixSpec::Scalar(0.01)
}

fn default_m0_one() -> MatrixSpec {
    MatrixSpec::Scalar(1.0)
}

fn default_m0_hundred() -> MatrixSpec {
    MatrixSpec::Scalar(100.0)
}

fn default_kp() -> GainSpec {
    GainSpec::Scalar(5.0)
}

fn default_kv() -> GainSpec {
    GainSpec::Scalar(2.0)
}

impl Default for CentralizedSection {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            q: default_q(),
            s: default_s(),
            m0: default_m0_one(),
        }
    }
}

impl Default for EdgeSection {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            q: default_q(),
            s: default_s(),
            m0: default_m0_hundred(),
        }
    }
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            kappa_o1: default_kappa(),
            kappa_o2: default_kappa_o2(),
            leader_unit_gain: false,
        }
    }
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            kp: default_kp(),
            kv: default_kv(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(default)]
    pub centralized: CentralizedSection,
    #[serde(default)]
    pub edge: EdgeSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub control: ControlSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Excitation window length T in seconds.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Classification threshold on the excitation level μ.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_window() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    analysis::DEFAULT_PE_THRESHOLD
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            window: default_window(),
            threshold: default_threshold(),
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}

fn default_duration() -> f64 {
    30.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_leader() -> usize {
    1
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: Mode,
    /// Ambient dimension d ≥ 2.
    pub d: usize,
    /// Number of agents n ≥ 2.
    pub n: usize,
    /// Leader agent, 1-based; 0 means no leader.
    #[serde(default = "default_leader")]
    pub leader: usize,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// RNG seed for the measurement noise streams.
    #[serde(default)]
    pub seed: u64,
    /// Communication delay in integration steps (0 = same-step exchange).
    #[serde(default)]
    pub delay: usize,
    /// Which estimates the controller consumes in control modes.
    #[serde(default)]
    pub feedback: FeedbackSource,
    pub graph: GraphSection,
    pub reference: ReferenceSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The formation graph (validates edges).
    pub fn graph(&self) -> Result<FormationGraph> {
        FormationGraph::from_one_based(self.n, self.d, &self.graph.edges)
    }

    /// 0-based leader index, if any.
    pub fn leader_index(&self) -> Option<usize> {
        (self.leader > 0).then(|| self.leader - 1)
    }

    /// Edge-list indices of the declared PE edges.
    pub fn pe_edge_indices(&self, g: &FormationGraph) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.graph.pe_edges.len());
        for &(i, j) in &self.graph.pe_edges {
            if i == 0 || j == 0 || i > self.n || j > self.n {
                return Err(Error::Validation(format!(
                    "PE edge ({i},{j}) names a vertex outside 1..={}",
                    self.n
                )));
            }
            let (k, _) = g.edge_between(i - 1, j - 1).ok_or(Error::NotPeEdge(i, j))?;
            if out.contains(&k) {
                return Err(Error::Validation(format!(
                    "PE edge ({i},{j}) declared twice"
                )));
            }
            out.push(k);
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        match &self.reference {
            ReferenceSection::LeaderSine { r, f } => {
                if self.n != 4 || self.d != 3 {
                    return Err(Error::Validation(format!(
                        "the leader-sine reference is defined for n = 4, d = 3 (got n = {}, d = {})",
                        self.n, self.d
                    )));
                }
                if !(r.is_finite() && *r > 0.0) || !(f.is_finite() && *f > 0.0) {
                    return Err(Error::Validation(
                        "leader-sine parameters r and f must be positive".into(),
                    ));
                }
                Ok(ReferenceTrajectory::LeaderSine { r: *r, f: *f })
            }
            ReferenceSection::Static { positions } => {
                let ps = vectors_from(positions, self.n, self.d, "reference positions")?;
                Ok(ReferenceTrajectory::Static { positions: ps })
            }
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            kind: self.noise.kind,
            magnitude: self.noise.magnitude,
            seed: self.seed,
        }
    }

    /// Initial true states; fields left out fall back to the reference.
    pub fn initial_true(&self) -> Result<Vec<AgentState>> {
        let sample = self.reference()?.sample(0.0);
        let p = match &self.initial.p {
            Some(rows) => vectors_from(rows, self.n, self.d, "initial positions")?,
            None => sample.p,
        };
        let v = match &self.initial.v {
            Some(rows) => vectors_from(rows, self.n, self.d, "initial velocities")?,
            None => sample.v,
        };
        Ok(p.into_iter()
            .zip(v)
            .map(|(p, v)| AgentState::new(p, v))
            .collect())
    }

    /// Initial estimates, when the mode needs them.
    pub fn initial_estimates(&self) -> Result<Vec<AgentState>> {
        let p = self.initial.p_hat.as_ref().ok_or_else(|| {
            Error::Validation("this mode needs initial position estimates (initial.p_hat)".into())
        })?;
        let v = self.initial.v_hat.as_ref().ok_or_else(|| {
            Error::Validation("this mode needs initial velocity estimates (initial.v_hat)".into())
        })?;
        let p = vectors_from(p, self.n, self.d, "initial position estimates")?;
        let v = vectors_from(v, self.n, self.d, "initial velocity estimates")?;
        Ok(p.into_iter()
            .zip(v)
            .map(|(p, v)| AgentState::new(p, v))
            .collect())
    }

    /// Whether this run needs the decentralized observer stack.
    pub fn runs_decentralized(&self) -> bool {
        match self.mode {
            Mode::DecentralizedObserver => true,
            Mode::ObserverBasedControl => self.feedback == FeedbackSource::Decentralized,
            _ => false,
        }
    }

    /// Whether this run needs the centralized observer.
    pub fn runs_centralized(&self) -> bool {
        match self.mode {
            Mode::CentralizedObserver => true,
            Mode::ObserverBasedControl => self.feedback == FeedbackSource::Centralized,
            _ => false,
        }
    }

    /// Whether this run needs any state estimates at all.
    pub fn runs_observer(&self) -> bool {
        self.runs_centralized() || self.runs_decentralized()
    }

    pub fn centralized_observer(&self, g: &FormationGraph) -> Result<CentralizedObserver> {
        let nd = self.n * self.d;
        let gains = CentralizedGains {
            kappa: self.gains.centralized.kappa,
            q: self
                .gains
                .centralized
                .q
                .materialize(nd, "gains.centralized.q")?,
            s: self
                .gains
                .centralized
                .s
                .materialize(2 * nd, "gains.centralized.s")?,
        };
        CentralizedObserver::new(g, self.leader_index(), gains)
    }

    pub fn centralized_m0(&self) -> Result<DMatrix<f64>> {
        self.gains
            .centralized
            .m0
            .materialize(2 * self.n * self.d, "gains.centralized.m0")
    }

    pub fn edge_observer(&self, g: &FormationGraph, k: usize) -> Result<EdgeObserver> {
        let gains = EdgeGains {
            kappa: self.gains.edge.kappa,
            q: self.gains.edge.q.materialize(self.d, "gains.edge.q")?,
            s: self.gains.edge.s.materialize(2 * self.d, "gains.edge.s")?,
        };
        EdgeObserver::new(k, g.edge_one_based(k), self.d, gains)
    }

    pub fn edge_m0(&self) -> Result<DMatrix<f64>> {
        self.gains.edge.m0.materialize(2 * self.d, "gains.edge.m0")
    }

    pub fn distributed_observer(&self, g: &FormationGraph) -> Result<DistributedObserver> {
        let pe = self.pe_edge_indices(g)?;
        let gains = DistributedGains {
            kappa_o1: self.gains.fusion.kappa_o1,
            kappa_o2: self.gains.fusion.kappa_o2,
            leader_unit_gain: self.gains.fusion.leader_unit_gain,
        };
        DistributedObserver::new(g, self.leader_index(), &pe, gains)
    }

    pub fn control_gains(&self) -> Result<ControlGains> {
        ControlGains::new(
            self.gains
                .control
                .kp
                .per_agent(self.n, "gains.control.kp")?,
            self.gains
                .control
                .kv
                .per_agent(self.n, "gains.control.kv")?,
        )
    }

    /// Check everything that can be checked before stepping. Returns
    /// warnings for suspicious-but-legal configurations.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.duration < self.dt {
            return Err(Error::Validation(format!(
                "duration {} is shorter than one step dt = {}",
                self.duration, self.dt
            )));
        }
        let g = self.graph()?;
        if !g.is_connected() {
            return Err(Error::Validation(
                "the formation graph must be connected".into(),
            ));
        }
        if self.leader > self.n {
            return Err(Error::VertexOutOfRange {
                vertex: self.leader,
                n: self.n,
            });
        }
        self.noise_model().validate(self.d)?;
        let pe = self.pe_edge_indices(&g)?;
        let reference = self.reference()?;
        let initial_true = self.initial_true()?;
        for (i, s) in initial_true.iter().enumerate() {
            if !s.p.iter().chain(s.v.iter()).all(|x| x.is_finite()) {
                return Err(Error::Validation(format!(
                    "initial state of agent {} is not finite",
                    i + 1
                )));
            }
        }
        if self.runs_observer() {
            self.initial_estimates()?;
        }
        if self.runs_centralized() {
            self.centralized_observer(&g)?;
            let m0 = self.centralized_m0()?;
            if linalg::lambda_min(&m0) <= 0.0 {
                return Err(Error::Validation(
                    "gains.centralized.m0 must be positive definite".into(),
                ));
            }
        }
        if self.runs_decentralized() {
            self.distributed_observer(&g)?;
            for &k in &pe {
                self.edge_observer(&g, k)?;
            }
            let m0 = self.edge_m0()?;
            if linalg::lambda_min(&m0) <= 0.0 {
                return Err(Error::Validation(
                    "gains.edge.m0 must be positive definite".into(),
                ));
            }
            // The fusion level is a contraction only if the anchored pseudo
            // bearing Laplacian is invertible at the desired formation.
            if let Some(l) = self.leader_index() {
                let sample = reference.sample(0.0);
                let snap = analysis::bearings(&g, &sample.p, 0.0)?;
                let pseudo = analysis::pseudo_bearing_laplacian(&g, &pe, &snap)?;
                let anchored = pseudo + analysis::leader_anchor(self.n, self.d, l);
                let lambda = linalg::lambda_min(&anchored);
                if lambda < 1e-9 {
                    return Err(Error::Validation(format!(
                        "the formation is not localizable from the declared PE edges: \
                         λ_min(L̄_B + C₁) = {lambda:.3e}"
                    )));
                }
            }
        }
        if self.mode.is_control() {
            self.control_gains()?;
        }

        // Fewer PE edges than the connectivity bound requires cannot render
        // the formation bearing-persistently-excited.
        let need = analysis::min_pe_edge_count(self.d, self.n, g.m());
        if pe.len() < need {
            warnings.push(format!(
                "only {} PE edge(s) declared but at least {need} are needed for a BPE formation \
                 with n = {}, m = {}, d = {}",
                pe.len(),
                self.n,
                g.m(),
                self.d
            ));
        }
        // A declared-PE edge whose desired bearing never moves cannot excite
        // its edge observer.
        let probes = 24;
        let span = self.duration.min(8.0 * self.analysis.window);
        for &k in &pe {
            let mut min_dot: f64 = 1.0;
            let base = {
                let sample = reference.sample(0.0);
                analysis::bearings(&g, &sample.p, 0.0)?
                    .get(k)
                    .unwrap()
                    .clone()
            };
            for step in 1..=probes {
                let t = span * step as f64 / probes as f64;
                let sample = reference.sample(t);
                let snap = analysis::bearings(&g, &sample.p, t)?;
                min_dot = min_dot.min(base.dot(snap.get(k).unwrap()));
            }
            if min_dot > 1.0 - 1e-9 {
                let (i, j) = g.edge_one_based(k);
                warnings.push(format!(
                    "edge ({i},{j}) is declared PE but its desired bearing looks constant"
                ));
            }
        }
        Ok(warnings)
    }

    /// The named built-in benchmark scenarios.
    pub fn builtin(name: &str) -> Result<Scenario> {
        let observers_initial = InitialSection {
            p: None,
            v: None,
            p_hat: Some(vec![
                vec![0.0, 1.0, 0.0],
                vec![2.0, 0.0, 1.0],
                vec![0.0, -1.0, 1.0],
                vec![0.0, 0.0, 0.0],
            ]),
            v_hat: Some(vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ]),
        };
        let base = Scenario {
            name: name.to_string(),
            mode: Mode::CentralizedObserver,
            d: 3,
            n: 4,
            leader: 1,
            duration: 30.0,
            dt: 1e-3,
            seed: 0,
            delay: 0,
            feedback: FeedbackSource::Decentralized,
            graph: GraphSection {
                edges: vec![(1, 2), (2, 3), (3, 4), (1, 4)],
                pe_edges: vec![(1, 2), (1, 4)],
            },
            reference: ReferenceSection::LeaderSine {
                r: default_r(),
                f: default_f(),
            },
            noise: NoiseSection {
                kind: NoiseKind::MultiplicativeSkew,
                magnitude: 0.02,
            },
            initial: observers_initial,
            gains: GainsSection::default(),
            analysis: AnalysisSection::default(),
        };
        match name {
            "paper-centralized" => Ok(base),
            "paper-decentralized" => Ok(Scenario {
                mode: Mode::DecentralizedObserver,
                ..base
            }),
            "paper-control" => Ok(Scenario {
                mode: Mode::ObserverBasedControl,
                initial: InitialSection {
                    p: Some(vec![
                        vec![1.0, 0.0, 0.0],
                        vec![-1.0, 1.0, 1.0],
                        vec![0.0, 1.0, 0.0],
                        vec![0.0, 0.0, 0.0],
                    ]),
                    v: Some(vec![
                        vec![0.0, 0.0, 1.0],
                        vec![1.0, -1.0, -1.0],
                        vec![1.0, 0.0, 1.0],
                        vec![0.0, 0.0, 0.0],
                    ]),
                    ..base.initial.clone()
                },
                ..base
            }),
            other => Err(Error::Validation(format!(
                "unknown built-in scenario {other:?}; available: {}",
                BUILTIN_NAMES.join(", ")
            ))),
        }
    }
}

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["paper-centralized", "paper-decentralized", "paper-control"];

fn vectors_from(rows: &[Vec<f64>], n: usize, d: usize, name: &str) -> Result<Vec<DVector<f64>>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Validation(format!(
            "{name} must list {n} vectors of dimension {d}"
        )));
    }
    Ok(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
}
