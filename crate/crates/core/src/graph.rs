//! Formation graph: agents, oriented sensing edges, incidence and Laplacian
//! matrices.
//!
//! Scenario files number vertices 1..n; that numbering is converted to
//! 0-based indices here, at construction, and never leaks back out except in
//! error messages and reports. Edge orientation is kept exactly as declared:
//! edge k = (i, j) points from its initial vertex i to its terminal vertex j,
//! and the relative quantities stored for that edge follow the same
//! orientation (p̄_k = p_j − p_i).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected connectivity with a declared orientation per edge.
#[derive(Debug, Clone)]
pub struct FormationGraph {
    n: usize,
    d: usize,
    /// 0-based (initial, terminal) pairs, in declaration order.
    edges: Vec<(usize, usize)>,
    /// 0-based sorted neighbor lists.
    neighbors: Vec<Vec<usize>>,
}

impl FormationGraph {
    /// Build a graph on `n` vertices embedded in dimension `d` from 1-based
    /// oriented edges, as they appear in scenario files.
    pub fn from_one_based(n: usize, d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        if d < 2 {
            return Err(Error::Validation(format!("need dimension >= 2, got {d}")));
        }
        let mut zero_based = Vec::with_capacity(edges.len());
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in edges {
            for v in [i, j] {
                if v == 0 || v > n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::DuplicateEdge(i, j));
            }
            zero_based.push((i - 1, j - 1));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &zero_based {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            d,
            edges: zero_based,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Oriented edges as 0-based (initial, terminal) pairs, in declaration
    /// order. This order is the edge indexing used everywhere else.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edge endpoints in 1-based numbering, for reports and error messages.
    pub fn edge_one_based(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.edges[k];
        (i + 1, j + 1)
    }

    /// Sorted 0-based neighbors of vertex `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Index of the edge joining `i` and `j` (0-based vertices), plus whether
    /// the stored orientation is (j, i) rather than (i, j).
    pub fn edge_between(&self, i: usize, j: usize) -> Option<(usize, bool)> {
        self.edges.iter().enumerate().find_map(|(k, &(a, b))| {
            if (a, b) == (i, j) {
                Some((k, false))
            } else if (a, b) == (j, i) {
                Some((k, true))
            } else {
                None
            }
        })
    }

    /// Incidence matrix H ∈ R^{m×n}: row k has +1 at the initial vertex and
    /// −1 at the terminal vertex of edge k.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m(), self.n);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            h[(k, i)] = 1.0;
            h[(k, j)] = -1.0;
        }
        h
    }

    /// Expanded incidence matrix H̄ = H ⊗ I_d ∈ R^{md×nd}.
    pub fn incidence_expanded(&self) -> DMatrix<f64> {
        self.incidence()
            .kronecker(&DMatrix::identity(self.d, self.d))
    }

    /// Graph Laplacian lifted to R^{nd×nd}: L = H̄ᵀ H̄.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let h = self.incidence_expanded();
        h.transpose() * h
    }

    /// Connectivity via union-find.
    pub fn is_connected(&self) -> bool {
        let mut dsu = DisjointSet::new(self.n);
        for &(i, j) in &self.edges {
            dsu.union(i, j);
        }
        let root = dsu.find(0);
        (1..self.n).all(|v| dsu.find(v) == root)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{four_agent_cycle, random_connected_graph};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Independent Laplacian construction: degree and adjacency blocks
    /// assembled vertex by vertex.
    fn laplacian_by_neighbor_sums(g: &FormationGraph) -> DMatrix<f64> {
        let (n, d) = (g.n(), g.d());
        let mut l = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for &j in g.neighbors(i) {
                for a in 0..d {
                    l[(i * d + a, i * d + a)] += 1.0;
                    l[(i * d + a, j * d + a)] -= 1.0;
                }
            }
        }
        l
    }

    #[test]
    fn four_agent_cycle_incidence_rows() {
        let g = four_agent_cycle(3);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -1.0, 0.0, 0.0, //
                0.0, 1.0, -1.0, 0.0, //
                0.0, 0.0, 1.0, -1.0, //
                1.0, 0.0, 0.0, -1.0,
            ],
        );
        assert_eq!(g.incidence(), expected);
    }

    #[test]
    fn single_edge_incidence_and_laplacian() {
        let g = FormationGraph::from_one_based(2, 2, &[(1, 2)]).unwrap();
        assert_eq!(g.incidence(), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, -1.0, 0.0, //
                0.0, 1.0, 0.0, -1.0, //
                -1.0, 0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0, 1.0,
            ],
        );
        assert_eq!(g.laplacian(), expected);
    }

    #[test]
    fn incidence_rows_sum_to_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = random_connected_graph(&mut rng, 8, 3);
            let ones = DVector::from_element(g.n(), 1.0);
            let sums = g.incidence() * ones;
            assert_relative_eq!(sums, DVector::zeros(g.m()), epsilon = 0.0);
        }
    }

    #[test]
    fn laplacian_matches_neighbor_sum_construction() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..=8);
            let d = rng.random_range(2..=3);
            let g = random_connected_graph(&mut rng, n, d);
            assert_relative_eq!(
                g.laplacian(),
                laplacian_by_neighbor_sums(&g),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn laplacian_annihilates_common_translations() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..10 {
            let n = rng.random_range(2..=8);
            let d = rng.random_range(2..=3);
            let g = random_connected_graph(&mut rng, n, d);
            let translations = DMatrix::from_element(n, 1, 1.0).kronecker(&DMatrix::identity(d, d));
            assert_relative_eq!(
                g.laplacian() * &translations,
                DMatrix::zeros(n * d, d),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn connected_laplacian_rank_is_dn_minus_d() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.random_range(2..=8);
            let d = rng.random_range(2..=3);
            let g = random_connected_graph(&mut rng, n, d);
            assert_eq!(g.laplacian().rank(1e-10), d * n - d);
        }
    }

    #[test]
    fn connectivity_cases() {
        assert!(four_agent_cycle(3).is_connected());
        let disconnected = FormationGraph::from_one_based(4, 2, &[(1, 2), (3, 4)]).unwrap();
        assert!(!disconnected.is_connected());
        let star = FormationGraph::from_one_based(5, 2, &[(1, 2), (1, 3), (1, 4), (1, 5)]).unwrap();
        assert!(star.is_connected());
        let isolated = FormationGraph::from_one_based(3, 2, &[(1, 2)]).unwrap();
        assert!(!isolated.is_connected());
    }

    #[test]
    fn rejects_malformed_edges() {
        match FormationGraph::from_one_based(4, 2, &[(1, 2), (2, 1)]) {
            Err(Error::DuplicateEdge(2, 1)) => {}
            other => panic!("expected duplicate edge error, got {other:?}"),
        }
        match FormationGraph::from_one_based(4, 2, &[(3, 3)]) {
            Err(Error::SelfLoop(3)) => {}
            other => panic!("expected self-loop error, got {other:?}"),
        }
        match FormationGraph::from_one_based(4, 2, &[(1, 5)]) {
            Err(Error::VertexOutOfRange { vertex: 5, n: 4 }) => {}
            other => panic!("expected out-of-range error, got {other:?}"),
        }
        match FormationGraph::from_one_based(4, 2, &[(0, 2)]) {
            Err(Error::VertexOutOfRange { vertex: 0, n: 4 }) => {}
            other => panic!("expected out-of-range error, got {other:?}"),
        }
    }

    #[test]
    fn edge_order_and_lookup_are_stable() {
        let g = four_agent_cycle(3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert_eq!(g.edge_between(0, 1), Some((0, false)));
        assert_eq!(g.edge_between(1, 0), Some((0, true)));
        assert_eq!(g.edge_between(3, 0), Some((3, true)));
        assert_eq!(g.edge_between(0, 2), None);
        assert_eq!(g.edge_one_based(3), (1, 4));
        assert_eq!(g.neighbors(0), &[1, 3]);
    }
}
