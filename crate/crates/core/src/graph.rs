//! Undirected agreement graphs and the redistribution matrix derived from them.

use rand::Rng;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// Symmetric, loop-free adjacency on `n` nodes, stored as one bit row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    n: usize,
    words_per_row: usize,
    rows: Vec<u64>,
    edge_prob: f64,
}

impl GraphTopology {
    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Self {
        let words_per_row = n.div_ceil(WORD_BITS);
        Self {
            n,
            words_per_row,
            rows: vec![0; n * words_per_row],
            edge_prob: 0.0,
        }
    }

    /// Complete graph K_n.
    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        let tail_bits = n % WORD_BITS;
        for i in 0..n {
            let row = g.row_mut(i);
            row.fill(u64::MAX);
            if tail_bits != 0 {
                *row.last_mut().unwrap() = (1u64 << tail_bits) - 1;
            }
            g.clear_bit(i, i);
        }
        g.edge_prob = 1.0;
        g
    }

    /// Builds a graph from an explicit edge list. Self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param("edges", format!("({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::param("edges", format!("self-loop at node {i}")));
            }
            g.set_edge(i, j);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edge probability used at generation time. Metadata only.
    pub fn edge_prob(&self) -> f64 {
        self.edge_prob
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    fn row_mut(&mut self, i: usize) -> &mut [u64] {
        let w = self.words_per_row;
        &mut self.rows[i * w..(i + 1) * w]
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.row_mut(i)[j / WORD_BITS] |= 1 << (j % WORD_BITS);
    }

    fn clear_bit(&mut self, i: usize, j: usize) {
        self.row_mut(i)[j / WORD_BITS] &= !(1 << (j % WORD_BITS));
    }

    fn set_edge(&mut self, i: usize, j: usize) {
        self.set_bit(i, j);
        self.set_bit(j, i);
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Neighbours of `i` in increasing index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + bit)
            })
        })
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.clear_bit(i, j);
        self.clear_bit(j, i);
    }

    /// Removes every edge with both endpoints in `members`.
    pub fn remove_edges_within(&mut self, members: &[usize]) {
        let mut mask = vec![0u64; self.words_per_row];
        for &k in members {
            mask[k / WORD_BITS] |= 1 << (k % WORD_BITS);
        }
        for &k in members {
            for (word, m) in self.row_mut(k).iter_mut().zip(&mask) {
                *word &= !m;
            }
        }
    }

    /// Removes every edge incident to `i`.
    pub fn isolate(&mut self, i: usize) {
        let nbrs: Vec<usize> = self.neighbors(i).collect();
        for j in nbrs {
            self.clear_bit(j, i);
        }
        self.row_mut(i).fill(0);
    }

    /// Dense boolean view, row-major. Intended for small graphs and tests.
    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j)).collect())
            .collect()
    }
}

/// Erdős–Rényi G(n, p): each unordered pair is an edge independently with
/// probability `p`. Pairs are visited in lexicographic order `(i, j), i < j`,
/// one Bernoulli draw each, so the result depends only on the generator state.
/// `p = 0` and `p = 1` consume no randomness.
pub fn generate_er_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<GraphTopology> {
    if n == 0 {
        return Err(Error::param("n", "node count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("edge probability {p} outside [0, 1]")));
    }
    if p == 1.0 {
        return Ok(GraphTopology::complete(n));
    }
    let mut g = GraphTopology::empty(n);
    g.edge_prob = p;
    if p == 0.0 {
        return Ok(g);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                g.set_edge(i, j);
            }
        }
    }
    Ok(g)
}

/// Column-normalized adjacency: `weight(i, j)` is the share of node `j`'s
/// load that moves to node `i` when `j` fails.
#[derive(Debug, Clone, PartialEq)]
pub struct RedistributionWeights {
    n: usize,
    weights: Vec<f64>,
}

impl RedistributionWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.weight(i, j)).sum()
    }

    /// `self * v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must match matrix order");
        (0..self.n)
            .map(|i| {
                self.weights[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }
}

/// `b_ij = a_ij / deg(j)`. Columns of isolated nodes are all zero, so the load
/// of a node with no neighbours is discarded rather than moved.
pub fn normalize_adjacency(g: &GraphTopology) -> RedistributionWeights {
    let n = g.n();
    let mut weights = vec![0.0; n * n];
    for j in 0..n {
        let deg = g.degree(j);
        if deg == 0 {
            continue;
        }
        let share = 1.0 / deg as f64;
        for i in g.neighbors(j) {
            weights[i * n + j] = share;
        }
    }
    RedistributionWeights { n, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Substreams;
    use proptest::prelude::*;

    fn is_symmetric_loop_free(g: &GraphTopology) -> bool {
        (0..g.n()).all(|i| !g.has_edge(i, i) && (0..g.n()).all(|j| g.has_edge(i, j) == g.has_edge(j, i)))
    }

    #[test]
    fn p_one_gives_complete_graph() {
        let mut rng = Substreams::new(9).trial_rng(0);
        let g = generate_er_graph(4, 1.0, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(is_symmetric_loop_free(&g));
    }

    #[test]
    fn p_zero_gives_empty_graph() {
        let mut rng = Substreams::new(9).trial_rng(0);
        let g = generate_er_graph(4, 0.0, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = Substreams::new(1).trial_rng(0);
        assert!(generate_er_graph(0, 0.5, &mut rng).is_err());
        assert!(generate_er_graph(5, -0.1, &mut rng).is_err());
        assert!(generate_er_graph(5, 1.5, &mut rng).is_err());
        assert!(generate_er_graph(5, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn edge_count_matches_binomial_moments() {
        // C(1000, 2) Bernoulli(0.5) trials: mean 249750, sd sqrt(499500 * 0.25).
        let mean = 249_750.0;
        let sd = (499_500.0f64 * 0.25).sqrt();
        for seed in [1u64, 2, 3] {
            let mut rng = Substreams::new(seed).trial_rng(0);
            let g = generate_er_graph(1000, 0.5, &mut rng).unwrap();
            let z = (g.edge_count() as f64 - mean) / sd;
            assert!(z.abs() < 4.0, "seed {seed}: z = {z}");
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let s = Substreams::at_point(77, 2);
        let a = generate_er_graph(120, 0.3, &mut s.trial_rng(5)).unwrap();
        let b = generate_er_graph(120, 0.3, &mut s.trial_rng(5)).unwrap();
        assert_eq!(a, b);
        let c = generate_er_graph(120, 0.3, &mut s.trial_rng(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn triangle_weights_are_halves() {
        let g = GraphTopology::complete(3);
        let b = normalize_adjacency(&g);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert_eq!(b.weight(i, j), expected);
            }
            assert_eq!(b.column_sum(i), 1.0);
        }
    }

    #[test]
    fn path_weights_follow_sender_degree() {
        // Path 1-2-3, zero-indexed as 0-1-2.
        let g = GraphTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let b = normalize_adjacency(&g);
        assert_eq!(b.weight(1, 0), 1.0);
        assert_eq!(b.weight(0, 1), 0.5);
        assert_eq!(b.weight(2, 1), 0.5);
        assert_eq!(b.weight(0, 2), 0.0);
    }

    #[test]
    fn isolated_node_has_zero_column() {
        let g = GraphTopology::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let b = normalize_adjacency(&g);
        assert!((0..4).all(|i| b.weight(i, 3) == 0.0));
        assert_eq!(b.column_sum(3), 0.0);
    }

    #[test]
    fn from_edges_rejects_loops_and_out_of_range() {
        assert!(GraphTopology::from_edges(3, &[(1, 1)]).is_err());
        assert!(GraphTopology::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn neighbors_cross_word_boundaries() {
        let g = GraphTopology::from_edges(200, &[(0, 63), (0, 64), (0, 199)]).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![63, 64, 199]);
        assert_eq!(g.neighbors(199).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn edge_removal_keeps_symmetry() {
        let mut g = GraphTopology::complete(6);
        g.remove_edges_within(&[1, 3, 4]);
        assert!(!g.has_edge(1, 3) && !g.has_edge(4, 3) && !g.has_edge(1, 4));
        assert!(g.has_edge(1, 0));
        g.isolate(0);
        assert_eq!(g.degree(0), 0);
        g.remove_edge(2, 5);
        assert!(is_symmetric_loop_free(&g));
        assert_eq!(g.edge_count(), 15 - 3 - 5 - 1);
    }

    proptest! {
        #[test]
        fn column_sums_are_zero_or_one(n in 1usize..40, p in 0.0f64..=1.0, seed: u64, cut in proptest::collection::vec(0usize..40, 0..10)) {
            let mut g = generate_er_graph(n, p, &mut Substreams::new(seed).trial_rng(0)).unwrap();
            prop_assert!(is_symmetric_loop_free(&g));
            let check = |g: &GraphTopology| {
                let b = normalize_adjacency(g);
                (0..g.n()).all(|j| {
                    let s = b.column_sum(j);
                    if g.degree(j) == 0 { s == 0.0 } else { (s - 1.0).abs() < 1e-12 }
                })
            };
            prop_assert!(check(&g));
            for k in cut.into_iter().filter(|&k| k < n) {
                g.isolate(k);
            }
            prop_assert!(is_symmetric_loop_free(&g));
            prop_assert!(check(&g));
        }
    }
}
