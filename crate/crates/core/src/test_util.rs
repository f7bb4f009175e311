//! Shared helpers for unit tests.

use nalgebra::DVector;
use rand::Rng;

use crate::graph::FormationGraph;

/// The four-agent cycle used by the built-in benchmark scenarios:
/// edges (1,2), (2,3), (3,4), (1,4).
pub fn four_agent_cycle(d: usize) -> FormationGraph {
    FormationGraph::from_one_based(4, d, &[(1, 2), (2, 3), (3, 4), (1, 4)]).unwrap()
}

/// Random connected graph on exactly `n` vertices: a random spanning tree
/// plus a few extra edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, d: usize) -> FormationGraph {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 2..=n {
        let parent = rng.random_range(1..v);
        // Randomize the declared orientation.
        if rng.random_bool(0.5) {
            edges.push((parent, v));
        } else {
            edges.push((v, parent));
        }
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            if !edges.contains(&(i, j)) && !edges.contains(&(j, i)) && rng.random_bool(0.15) {
                edges.push((i, j));
            }
        }
    }
    FormationGraph::from_one_based(n, d, &edges).unwrap()
}

/// Uniformly random unit vector.
pub fn random_unit_vector<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Random agent positions in a box, re-sampled until no two agents on an
/// edge are closer than `min_sep`.
pub fn random_positions<R: Rng>(
    rng: &mut R,
    g: &FormationGraph,
    scale: f64,
    min_sep: f64,
) -> Vec<DVector<f64>> {
    loop {
        let ps: Vec<DVector<f64>> = (0..g.n())
            .map(|_| DVector::from_fn(g.d(), |_, _| rng.random_range(-scale..scale)))
            .collect();
        let ok = g
            .edges()
            .iter()
            .all(|&(i, j)| (&ps[j] - &ps[i]).norm() > min_sep);
        if ok {
            return ps;
        }
    }
}
