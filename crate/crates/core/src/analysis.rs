//! Bearing geometry and persistence-of-excitation analysis.
//!
//! The central objects are the orthogonal projector π_y = I − yyᵀ onto the
//! complement of a unit direction y, the bearing Laplacian
//! L_B = H̄ᵀ diag(π_{g_k}) H̄ built from one bearing per edge, and its
//! "pseudo" variant L̄_B in which persistently excited (PE) edges contribute
//! a full identity block instead of a projector.
//!
//! A direction signal y(t) is PE over windows of length T when the windowed
//! average of π_{y(t)} stays uniformly positive definite; the infimum of its
//! smallest eigenvalue is the excitation level μ. A formation is
//! bearing-persistently-excited (BPE) when the windowed average of L_B
//! dominates μ·L on the complement of the common translations for some
//! μ > 0, with L the graph Laplacian.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::linalg;

/// Two agents closer than this along an edge make the bearing undefined.
pub const COLLISION_TOL: f64 = 1e-6;

/// Default excitation level above which an edge or formation is classified
/// as persistently excited.
pub const DEFAULT_PE_THRESHOLD: f64 = 1e-3;

/// Orthogonal projector π_y = I − yyᵀ onto the complement of the unit
/// vector y.
pub fn projector(y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let norm = y.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit(norm));
    }
    Ok(DMatrix::identity(y.len(), y.len()) - y * y.transpose())
}

/// Bearings of every edge at one instant, in the stored edge orientation:
/// entry k is g_k = (p_j − p_i)/‖p_j − p_i‖ for edge k = (i, j).
#[derive(Debug, Clone)]
pub struct BearingSnapshot {
    pub t: f64,
    bearings: Vec<Option<DVector<f64>>>,
}

impl BearingSnapshot {
    pub fn new(t: f64, m: usize) -> Self {
        Self {
            t,
            bearings: vec![None; m],
        }
    }

    pub fn len(&self) -> usize {
        self.bearings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bearings.is_empty()
    }

    pub fn set(&mut self, k: usize, g: DVector<f64>) {
        self.bearings[k] = Some(g);
    }

    pub fn get(&self, k: usize) -> Option<&DVector<f64>> {
        self.bearings.get(k).and_then(|b| b.as_ref())
    }

    /// Bearing of edge `k`, or an error naming the edge.
    pub fn require(&self, g: &FormationGraph, k: usize) -> Result<&DVector<f64>> {
        self.get(k).ok_or_else(|| {
            let (i, j) = g.edge_one_based(k);
            Error::MissingBearing(i, j)
        })
    }
}

/// Exact bearings of all edges for the given agent positions.
///
/// Fails with a degenerate-bearing error if two agents joined by an edge are
/// closer than [`COLLISION_TOL`].
pub fn bearings(g: &FormationGraph, positions: &[DVector<f64>], t: f64) -> Result<BearingSnapshot> {
    let mut snap = BearingSnapshot::new(t, g.m());
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let rel = &positions[j] - &positions[i];
        let dist = rel.norm();
        if dist <= COLLISION_TOL {
            let (i1, j1) = g.edge_one_based(k);
            return Err(Error::DegenerateBearing {
                i: i1,
                j: j1,
                t,
                dist,
            });
        }
        snap.set(k, rel / dist);
    }
    Ok(snap)
}

/// Block matrix C₁ ∈ R^{nd×nd} selecting the leader's position: the
/// (leader, leader) block is I_d, everything else zero.
pub fn leader_anchor(n: usize, d: usize, leader: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n * d, n * d);
    for a in 0..d {
        c[(leader * d + a, leader * d + a)] = 1.0;
    }
    c
}

/// Bearing Laplacian L_B = H̄ᵀ diag(π_{g_k}) H̄ ∈ R^{nd×nd}.
///
/// L_B is symmetric positive semidefinite, annihilates the position stack
/// that generated the bearings, and has rank at most dn − d − 1.
pub fn bearing_laplacian(g: &FormationGraph, snap: &BearingSnapshot) -> Result<DMatrix<f64>> {
    let d = g.d();
    let mut pi = DMatrix::zeros(g.m() * d, g.m() * d);
    for k in 0..g.m() {
        let bearing = snap.require(g, k)?;
        pi.view_mut((k * d, k * d), (d, d))
            .copy_from(&projector(bearing)?);
    }
    let h = g.incidence_expanded();
    Ok(h.transpose() * pi * h)
}

/// Pseudo bearing Laplacian L̄_B = H̄ᵀ Σ̄ H̄ where σ_k = I_d on PE edges and
/// σ_k = π_{g_k} (from `snap`) on the remaining edges.
///
/// L̄_B ⪰ L_B for any snapshot agreeing on the non-PE edges, and L̄_B + C₁
/// is invertible whenever the graph is connected.
pub fn pseudo_bearing_laplacian(
    g: &FormationGraph,
    pe_edges: &[usize],
    snap: &BearingSnapshot,
) -> Result<DMatrix<f64>> {
    let d = g.d();
    for &k in pe_edges {
        if k >= g.m() {
            return Err(Error::Validation(format!(
                "PE edge index {k} out of range; graph has {} edges",
                g.m()
            )));
        }
    }
    let mut sigma = DMatrix::zeros(g.m() * d, g.m() * d);
    for k in 0..g.m() {
        let block = if pe_edges.contains(&k) {
            DMatrix::identity(d, d)
        } else {
            projector(snap.require(g, k)?)?
        };
        sigma.view_mut((k * d, k * d), (d, d)).copy_from(&block);
    }
    let h = g.incidence_expanded();
    Ok(h.transpose() * sigma * h)
}

/// Windowed time averages of a uniformly sampled matrix signal, by
/// trapezoidal quadrature: entry s is (1/T)∫ over [t_s, t_s + T], for every
/// window start s that fits in the sampled span.
fn windowed_averages(samples: &[DMatrix<f64>], dt: f64, window: f64) -> Result<Vec<DMatrix<f64>>> {
    if samples.len() < 2 {
        return Err(Error::Validation(
            "excitation analysis needs at least two samples".into(),
        ));
    }
    if !(dt.is_finite() && dt > 0.0) || !(window.is_finite() && window > 0.0) {
        return Err(Error::Validation(format!(
            "excitation analysis needs positive dt and window (dt = {dt}, window = {window})"
        )));
    }
    let span = (samples.len() - 1) as f64 * dt;
    if window > span * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::WindowTooLong { window, span });
    }
    let steps = ((window / dt).round() as usize).clamp(1, samples.len() - 1);
    // Trapezoid prefix sums: prefix[i] = ∫ over [t_0, t_i].
    let shape = samples[0].shape();
    let mut prefix = Vec::with_capacity(samples.len());
    prefix.push(DMatrix::zeros(shape.0, shape.1));
    for i in 1..samples.len() {
        let next = &prefix[i - 1] + (&samples[i - 1] + &samples[i]) * (dt / 2.0);
        prefix.push(next);
    }
    let width = steps as f64 * dt;
    Ok((0..samples.len() - steps)
        .map(|s| (&prefix[s + steps] - &prefix[s]) / width)
        .collect())
}

/// Excitation level of a sampled positive semidefinite matrix signal: the
/// minimum over all windows [t, t + window] of the smallest eigenvalue of
/// the windowed average, with trapezoidal quadrature at spacing `dt`.
///
/// A constant projector has level 0; a direction rotating uniformly in a
/// plane averaged over a full turn has level 1/2.
pub fn pe_level(samples: &[DMatrix<f64>], dt: f64, window: f64) -> Result<f64> {
    let averages = windowed_averages(samples, dt, window)?;
    Ok(averages
        .iter()
        .map(linalg::lambda_min)
        .fold(f64::INFINITY, f64::min))
}

/// Excitation level of one edge in a report.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeExcitation {
    /// Edge endpoints, 1-based.
    pub edge: (usize, usize),
    /// Excitation level μ of the bearing's projector signal.
    pub mu: f64,
}

/// Result of bearing persistence-of-excitation analysis over a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct PeReport {
    /// Window length T in seconds.
    pub window: f64,
    /// Classification threshold on μ.
    pub threshold: f64,
    /// Per-edge excitation levels, in edge declaration order.
    pub per_edge: Vec<EdgeExcitation>,
    /// Edges classified as persistently excited (1-based pairs).
    pub pe_edges: Vec<(usize, usize)>,
    /// Largest μ such that the windowed average of L_B dominates μ·L on the
    /// complement of the common translations, minimized over windows.
    pub formation_mu: f64,
    /// Whether the formation is bearing-persistently-excited.
    pub bpe: bool,
    /// Why `bpe` is false, when it is.
    pub reason: Option<String>,
}

/// Classify the excitation of every edge and of the whole formation from a
/// uniformly sampled bearing history.
pub fn check_bpe(
    g: &FormationGraph,
    snapshots: &[BearingSnapshot],
    window: f64,
    threshold: f64,
) -> Result<PeReport> {
    if snapshots.len() < 2 {
        return Err(Error::Validation(
            "excitation analysis needs at least two bearing snapshots".into(),
        ));
    }
    let dt = (snapshots[1].t - snapshots[0].t).abs();
    for pair in snapshots.windows(2) {
        let spacing = pair[1].t - pair[0].t;
        if (spacing - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Validation(format!(
                "bearing snapshots are not uniformly sampled ({spacing} vs {dt})"
            )));
        }
    }

    let mut per_edge = Vec::with_capacity(g.m());
    let mut pe_edges = Vec::new();
    for k in 0..g.m() {
        let projectors: Vec<DMatrix<f64>> = snapshots
            .iter()
            .map(|s| projector(s.require(g, k)?))
            .collect::<Result<_>>()?;
        let mu = pe_level(&projectors, dt, window)?;
        if mu > threshold {
            pe_edges.push(g.edge_one_based(k));
        }
        per_edge.push(EdgeExcitation {
            edge: g.edge_one_based(k),
            mu,
        });
    }

    if !g.is_connected() {
        return Ok(PeReport {
            window,
            threshold,
            per_edge,
            pe_edges,
            formation_mu: 0.0,
            bpe: false,
            reason: Some("graph is disconnected".into()),
        });
    }

    let laplacians: Vec<DMatrix<f64>> = snapshots
        .iter()
        .map(|s| bearing_laplacian(g, s))
        .collect::<Result<_>>()?;
    let averages = windowed_averages(&laplacians, dt, window)?;
    let basis = linalg::translation_complement(g.n(), g.d());
    let laplacian = g.laplacian();
    let mut formation_mu = f64::INFINITY;
    for avg in &averages {
        let mu = linalg::min_generalized_eigenvalue(avg, &laplacian, &basis).ok_or_else(|| {
            Error::Validation("graph Laplacian is singular on the translation complement".into())
        })?;
        formation_mu = formation_mu.min(mu);
    }
    let bpe = formation_mu > threshold;
    Ok(PeReport {
        window,
        threshold,
        per_edge,
        pe_edges,
        formation_mu,
        bpe,
        reason: if bpe {
            None
        } else {
            Some(format!(
                "formation excitation level {formation_mu:.3e} is below the threshold {threshold:.3e}"
            ))
        },
    })
}

/// Minimum number of persistently excited edges a connected formation on n
/// vertices with m edges in dimension d must have to be BPE when m is below
/// the bearing-rigidity edge threshold: max(0, d(n−1) − (d−1)m).
pub fn min_pe_edge_count(d: usize, n: usize, m: usize) -> usize {
    (d * (n - 1)).saturating_sub((d - 1) * m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ReferenceTrajectory;
    use crate::test_util::{
        four_agent_cycle, random_connected_graph, random_positions, random_unit_vector,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Independent bearing-Laplacian construction: per-vertex blocks
    /// assembled from neighbor sums rather than incidence products.
    fn bearing_laplacian_by_blocks(g: &FormationGraph, snap: &BearingSnapshot) -> DMatrix<f64> {
        let (n, d) = (g.n(), g.d());
        let mut l = DMatrix::zeros(n * d, n * d);
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            let pi = projector(snap.get(k).unwrap()).unwrap();
            for (a, b) in [(i, i), (j, j)] {
                let mut block = l.view_mut((a * d, b * d), (d, d));
                block += &pi;
            }
            for (a, b) in [(i, j), (j, i)] {
                let mut block = l.view_mut((a * d, b * d), (d, d));
                block -= &pi;
            }
        }
        l
    }

    fn benchmark_reference() -> ReferenceTrajectory {
        ReferenceTrajectory::LeaderSine {
            r: 2.0 * std::f64::consts::SQRT_2,
            f: 1.0 / std::f64::consts::TAU,
        }
    }

    /// Bearing snapshots of the benchmark reference sampled at `dt`.
    fn benchmark_snapshots(g: &FormationGraph, dt: f64, duration: f64) -> Vec<BearingSnapshot> {
        let reference = benchmark_reference();
        let steps = (duration / dt).round() as usize;
        (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                bearings(g, &reference.sample(t).p, t).unwrap()
            })
            .collect()
    }

    #[test]
    fn projector_of_axis_directions() {
        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        assert_relative_eq!(
            projector(&e1).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
        let diag = DVector::from_element(3, 1.0 / 3f64.sqrt());
        let expected = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert_relative_eq!(projector(&diag).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn projector_rejects_non_unit_input() {
        let err = projector(&DVector::from_column_slice(&[2.0, 0.0])).unwrap_err();
        match err {
            Error::NotUnit(norm) => assert_relative_eq!(norm, 2.0),
            other => panic!("expected non-unit error, got {other:?}"),
        }
    }

    #[test]
    fn projector_is_an_orthogonal_projection() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(2..=4);
            let y = random_unit_vector(&mut rng, d);
            let p = projector(&y).unwrap();
            assert_relative_eq!(&p * &p, p.clone(), epsilon = 1e-12);
            assert_relative_eq!(p.transpose(), p.clone(), epsilon = 1e-15);
            assert_relative_eq!(p.trace(), (d - 1) as f64, epsilon = 1e-12);
            assert_relative_eq!(&p * &y, DVector::zeros(d), epsilon = 1e-12);
        }
    }

    #[test]
    fn bearings_point_from_initial_to_terminal() {
        let g = FormationGraph::from_one_based(2, 3, &[(1, 2)]).unwrap();
        let ps = vec![
            DVector::zeros(3),
            DVector::from_column_slice(&[5.0, 0.0, 0.0]),
        ];
        let snap = bearings(&g, &ps, 0.0).unwrap();
        assert_relative_eq!(
            snap.get(0).unwrap(),
            &DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            epsilon = 1e-15
        );
        // Reversing the declared orientation flips the stored bearing.
        let g_rev = FormationGraph::from_one_based(2, 3, &[(2, 1)]).unwrap();
        let snap_rev = bearings(&g_rev, &ps, 0.0).unwrap();
        assert_relative_eq!(
            snap_rev.get(0).unwrap(),
            &DVector::from_column_slice(&[-1.0, 0.0, 0.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn benchmark_bearing_of_edge_2_3_at_t0() {
        let g = four_agent_cycle(3);
        let snap = bearings(&g, &benchmark_reference().sample(0.0).p, 0.0).unwrap();
        // p₂ = (0, r, 0), p₃ = (0, 0, 0) ⇒ g = (0, −1, 0).
        assert_relative_eq!(
            snap.get(1).unwrap(),
            &DVector::from_column_slice(&[0.0, -1.0, 0.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn coincident_agents_name_the_offending_edge() {
        let g = four_agent_cycle(2);
        let ps = vec![
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
            DVector::from_column_slice(&[0.0, 2.0]),
        ];
        match bearings(&g, &ps, 3.5) {
            Err(Error::DegenerateBearing { i: 1, j: 2, t, .. }) => assert_relative_eq!(t, 3.5),
            other => panic!("expected degenerate bearing on (1,2), got {other:?}"),
        }
    }

    #[test]
    fn single_edge_bearing_laplacian_blocks() {
        let g = FormationGraph::from_one_based(2, 2, &[(1, 2)]).unwrap();
        let mut snap = BearingSnapshot::new(0.0, 1);
        snap.set(0, DVector::from_column_slice(&[1.0, 0.0]));
        let l = bearing_laplacian(&g, &snap).unwrap();
        let pi = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((0, 0), (2, 2)).copy_from(&pi);
        expected.view_mut((2, 2), (2, 2)).copy_from(&pi);
        expected.view_mut((0, 2), (2, 2)).copy_from(&(-&pi));
        expected.view_mut((2, 0), (2, 2)).copy_from(&(-&pi));
        assert_relative_eq!(l, expected, epsilon = 1e-15);
    }

    #[test]
    fn bearing_laplacian_matches_block_assembly_and_annihilates_positions() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(2..=6);
            let d = rng.random_range(2..=3);
            let g = random_connected_graph(&mut rng, n, d);
            let ps = random_positions(&mut rng, &g, 5.0, 0.1);
            let snap = bearings(&g, &ps, 0.0).unwrap();
            let l = bearing_laplacian(&g, &snap).unwrap();
            assert_relative_eq!(l, bearing_laplacian_by_blocks(&g, &snap), epsilon = 1e-10);

            let stack = DVector::from_iterator(n * d, ps.iter().flat_map(|p| p.iter().copied()));
            assert!(
                (&l * &stack).norm() <= 1e-9 * stack.norm().max(1.0),
                "bearing Laplacian does not annihilate its generating positions"
            );
            assert!(linalg::is_psd(&l, 1e-10));
            let max_rank = d * n - d - 1;
            assert!(l.rank(1e-10) <= max_rank);
        }
    }

    #[test]
    fn bearing_laplacian_requires_all_edges() {
        let g = four_agent_cycle(2);
        let mut snap = BearingSnapshot::new(0.0, 4);
        snap.set(0, DVector::from_column_slice(&[1.0, 0.0]));
        match bearing_laplacian(&g, &snap) {
            Err(Error::MissingBearing(2, 3)) => {}
            other => panic!("expected missing bearing (2,3), got {other:?}"),
        }
    }

    #[test]
    fn pseudo_laplacian_extremes() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let g = random_connected_graph(&mut rng, 5, 2);
        let ps = random_positions(&mut rng, &g, 5.0, 0.1);
        let snap = bearings(&g, &ps, 0.0).unwrap();
        let all: Vec<usize> = (0..g.m()).collect();
        assert_relative_eq!(
            pseudo_bearing_laplacian(&g, &all, &snap).unwrap(),
            g.laplacian(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            pseudo_bearing_laplacian(&g, &[], &snap).unwrap(),
            bearing_laplacian(&g, &snap).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pseudo_laplacian_dominates_bearing_laplacian() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..10 {
            let n = rng.random_range(2..=6);
            let d = rng.random_range(2..=3);
            let g = random_connected_graph(&mut rng, n, d);
            let ps = random_positions(&mut rng, &g, 5.0, 0.1);
            let snap = bearings(&g, &ps, 0.0).unwrap();
            let m = g.m();
            let pe: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
            let pseudo = pseudo_bearing_laplacian(&g, &pe, &snap).unwrap();
            let plain = bearing_laplacian(&g, &snap).unwrap();
            assert!(linalg::is_psd(&(pseudo - plain), 1e-10));
        }
    }

    #[test]
    fn pseudo_laplacian_rejects_unknown_edge_index() {
        let g = four_agent_cycle(2);
        let snap = BearingSnapshot::new(0.0, 4);
        match pseudo_bearing_laplacian(&g, &[7], &snap) {
            Err(Error::Validation(msg)) => assert!(msg.contains("7")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn anchored_pseudo_laplacian_is_invertible_on_benchmark() {
        let g = four_agent_cycle(3);
        let snap = bearings(&g, &benchmark_reference().sample(0.0).p, 0.0).unwrap();
        let pseudo = pseudo_bearing_laplacian(&g, &[0, 3], &snap).unwrap();
        let anchored = pseudo + leader_anchor(4, 3, 0);
        assert!(linalg::lambda_min(&anchored) > 1e-6);
    }

    #[test]
    fn constant_direction_has_zero_excitation() {
        let y = DVector::from_column_slice(&[0.6, 0.8]);
        let samples: Vec<DMatrix<f64>> = (0..1001).map(|_| projector(&y).unwrap()).collect();
        let mu = pe_level(&samples, 1e-3, 0.5).unwrap();
        assert!(mu.abs() <= 1e-12, "constant direction scored mu = {mu}");
    }

    #[test]
    fn rotating_direction_has_excitation_one_half() {
        // y(t) = (cos t, sin t) averaged over a full turn: avg(yyᵀ) = I/2.
        let dt = 1e-3;
        let window = std::f64::consts::TAU;
        let steps = (2.0 * window / dt).round() as usize;
        let samples: Vec<DMatrix<f64>> = (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                projector(&DVector::from_column_slice(&[t.cos(), t.sin()])).unwrap()
            })
            .collect();
        let mu = pe_level(&samples, dt, window).unwrap();
        assert!(
            (mu - 0.5).abs() < 1e-3,
            "rotating direction scored mu = {mu}"
        );
    }

    #[test]
    fn rotating_direction_in_3d_also_scores_one_half() {
        let dt = 1e-3;
        let window = std::f64::consts::TAU;
        let steps = (2.0 * window / dt).round() as usize;
        let samples: Vec<DMatrix<f64>> = (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                projector(&DVector::from_column_slice(&[t.cos(), t.sin(), 0.0])).unwrap()
            })
            .collect();
        let mu = pe_level(&samples, dt, window).unwrap();
        assert!(
            (mu - 0.5).abs() < 1e-3,
            "rotating 3d direction scored mu = {mu}"
        );
    }

    #[test]
    fn window_longer_than_signal_is_rejected() {
        let samples: Vec<DMatrix<f64>> = (0..11).map(|_| DMatrix::identity(2, 2)).collect();
        match pe_level(&samples, 0.1, 2.0) {
            Err(Error::WindowTooLong { .. }) => {}
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn excitation_is_monotone_under_psd_addition() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        for _ in 0..20 {
            let d = rng.random_range(2..=3);
            let len = 200;
            let samples: Vec<DMatrix<f64>> = (0..len)
                .map(|_| {
                    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                    &a * a.transpose()
                })
                .collect();
            let extra: Vec<DMatrix<f64>> = (0..len)
                .map(|_| {
                    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                    &a * a.transpose()
                })
                .collect();
            let summed: Vec<DMatrix<f64>> =
                samples.iter().zip(&extra).map(|(s, e)| s + e).collect();
            let base = pe_level(&samples, 0.01, 0.5).unwrap();
            let more = pe_level(&summed, 0.01, 0.5).unwrap();
            assert!(
                more >= base - 1e-12,
                "excitation dropped after PSD addition"
            );
        }
    }

    #[test]
    fn two_distinct_constant_directions_jointly_excite_the_plane() {
        // Complementary projectors of two non-colinear constant directions
        // sum to a uniformly positive definite signal, while a repeated
        // direction does not.
        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        let e2 = DVector::from_column_slice(&[0.0, 1.0]);
        let joint: Vec<DMatrix<f64>> = (0..101)
            .map(|_| projector(&e1).unwrap() + projector(&e2).unwrap())
            .collect();
        assert!(pe_level(&joint, 0.01, 0.5).unwrap() > 0.9);
        let repeated: Vec<DMatrix<f64>> = (0..101).map(|_| projector(&e1).unwrap() * 2.0).collect();
        assert!(pe_level(&repeated, 0.01, 0.5).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn benchmark_leader_edges_are_pe_and_follower_edges_are_not() {
        let g = four_agent_cycle(3);
        let snaps = benchmark_snapshots(&g, 1e-3, 3.0);
        let report = check_bpe(&g, &snaps, 1.0, DEFAULT_PE_THRESHOLD).unwrap();
        assert_eq!(report.pe_edges, vec![(1, 2), (1, 4)]);
        assert!(report.bpe, "benchmark formation should be BPE: {report:?}");
        assert!(report.formation_mu > DEFAULT_PE_THRESHOLD);
        assert_eq!(report.per_edge.len(), 4);
        assert!(
            report.per_edge[1].mu.abs() <= 1e-9,
            "edge (2,3) is constant"
        );
        assert!(
            report.per_edge[2].mu.abs() <= 1e-9,
            "edge (3,4) is constant"
        );
    }

    #[test]
    fn benchmark_edge_excitation_agrees_with_fine_quadrature() {
        let g = four_agent_cycle(3);
        let reference = benchmark_reference();
        let mu_by_dt = |dt: f64| {
            let steps = (2.0 / dt).round() as usize;
            let samples: Vec<DMatrix<f64>> = (0..=steps)
                .map(|i| {
                    let t = i as f64 * dt;
                    let snap = bearings(&g, &reference.sample(t).p, t).unwrap();
                    projector(snap.get(0).unwrap()).unwrap()
                })
                .collect();
            pe_level(&samples, dt, 1.0).unwrap()
        };
        let coarse = mu_by_dt(1e-3);
        let fine = mu_by_dt(1e-4);
        assert!(coarse > DEFAULT_PE_THRESHOLD);
        assert!(
            (coarse - fine).abs() <= 1e-6 + 1e-3 * fine.abs(),
            "quadrature mismatch: {coarse} vs {fine}"
        );
    }

    #[test]
    fn static_formation_is_not_bpe() {
        let g = four_agent_cycle(2);
        let positions = vec![
            DVector::from_column_slice(&[0.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
        ];
        let snaps: Vec<BearingSnapshot> = (0..=200)
            .map(|i| bearings(&g, &positions, i as f64 * 0.01).unwrap())
            .collect();
        let report = check_bpe(&g, &snaps, 1.0, DEFAULT_PE_THRESHOLD).unwrap();
        assert!(!report.bpe);
        assert!(report.pe_edges.is_empty());
        assert!(report.reason.is_some());
    }

    #[test]
    fn disconnected_graph_reports_reason() {
        let g = FormationGraph::from_one_based(4, 2, &[(1, 2), (3, 4)]).unwrap();
        let positions = vec![
            DVector::from_column_slice(&[0.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
        ];
        let snaps: Vec<BearingSnapshot> = (0..=100)
            .map(|i| bearings(&g, &positions, i as f64 * 0.01).unwrap())
            .collect();
        let report = check_bpe(&g, &snaps, 0.5, DEFAULT_PE_THRESHOLD).unwrap();
        assert!(!report.bpe);
        assert_eq!(report.reason.as_deref(), Some("graph is disconnected"));
    }

    #[test]
    fn minimum_pe_edge_counts() {
        assert_eq!(min_pe_edge_count(2, 4, 4), 2);
        assert_eq!(min_pe_edge_count(3, 4, 4), 1);
        assert_eq!(min_pe_edge_count(2, 2, 1), 1);
        // Dense graphs need no PE edges at all.
        assert_eq!(min_pe_edge_count(2, 4, 6), 0);
    }
}
