//! Directed graphs over a dense node set `0..n`.
//!
//! Edges are ordered pairs `(i, j)` meaning a link from `i` to `j`. Edge lists
//! are kept sorted so that every iteration order derived from a graph is
//! reproducible.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Which self-loops a graph is allowed or required to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPolicy {
    /// No constraint.
    #[default]
    Unrestricted,
    /// Every node has a self-loop (ordinary consensus and push-sum).
    Required,
    /// No node has a self-loop (robust push-sum base graph).
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphLiteral", into = "GraphLiteral")]
pub struct DirectedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    out_neighbors: Vec<Vec<usize>>,
    in_neighbors: Vec<Vec<usize>>,
    policy: LoopPolicy,
}

/// On-disk form of a graph: node count plus a list of `[i, j]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphLiteral {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphLiteral> for DirectedGraph {
    type Error = Error;

    fn try_from(lit: GraphLiteral) -> Result<Self> {
        DirectedGraph::new(lit.nodes, lit.edges.into_iter().map(|[i, j]| (i, j)))
    }
}

impl From<DirectedGraph> for GraphLiteral {
    fn from(g: DirectedGraph) -> Self {
        GraphLiteral {
            nodes: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl DirectedGraph {
    /// Builds a graph, rejecting out-of-range endpoints and duplicate edges.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if !set.insert((i, j)) {
                return Err(Error::DuplicateEdge(i, j));
            }
        }
        Ok(Self::from_set(n, set))
    }

    fn from_set(n: usize, set: BTreeSet<(usize, usize)>) -> Self {
        let mut out_neighbors = vec![Vec::new(); n];
        let mut in_neighbors = vec![Vec::new(); n];
        let edges: Vec<_> = set.into_iter().collect();
        for &(i, j) in &edges {
            out_neighbors[i].push(j);
            in_neighbors[j].push(i);
        }
        for list in &mut in_neighbors {
            list.sort_unstable();
        }
        DirectedGraph {
            n,
            edges,
            out_neighbors,
            in_neighbors,
            policy: LoopPolicy::Unrestricted,
        }
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self::from_set(n, BTreeSet::new())
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if n == 1 {
            return Ok(Self::empty(1));
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Directed ring plus the chord `0 -> n/2`.
    pub fn ring_with_chord(n: usize) -> Result<Self> {
        let ring = Self::ring(n)?;
        if n < 4 {
            return Ok(ring);
        }
        ring.with_edges([(0, n / 2)])
    }

    /// Complete digraph without self-loops.
    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        Self::new(
            n,
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
        )
    }

    /// Undirected path `0 - 1 - ... - n-1`, both directions present.
    pub fn bidirectional_path(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        Self::new(n, (1..n).flat_map(|i| [(i - 1, i), (i, i - 1)]))
    }

    /// Copy of this graph with additional edges (existing ones are kept once).
    pub fn with_edges(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set: BTreeSet<_> = self.edges.iter().copied().collect();
        for (i, j) in extra {
            for node in [i, j] {
                if node >= self.n {
                    return Err(Error::NodeOutOfRange { node, n: self.n });
                }
            }
            set.insert((i, j));
        }
        Ok(Self::from_set(self.n, set))
    }

    /// Copy of this graph with a self-loop at every node.
    pub fn with_self_loops(&self) -> Self {
        let mut set: BTreeSet<_> = self.edges.iter().copied().collect();
        set.extend((0..self.n).map(|i| (i, i)));
        let mut g = Self::from_set(self.n, set);
        g.policy = LoopPolicy::Required;
        g
    }

    /// Copy of this graph with every self-loop removed.
    pub fn without_self_loops(&self) -> Self {
        let set = self
            .edges
            .iter()
            .copied()
            .filter(|&(i, j)| i != j)
            .collect();
        let mut g = Self::from_set(self.n, set);
        g.policy = LoopPolicy::Forbidden;
        g
    }

    /// Attaches a self-loop policy after checking the graph satisfies it.
    pub fn with_policy(mut self, policy: LoopPolicy) -> Result<Self> {
        match policy {
            LoopPolicy::Unrestricted => {}
            LoopPolicy::Required => self.require_self_loops()?,
            LoopPolicy::Forbidden => self.require_no_self_loops()?,
        }
        self.policy = policy;
        Ok(self)
    }

    pub fn policy(&self) -> LoopPolicy {
        self.policy
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(i, j)` order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Position of `(i, j)` in the sorted edge list.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i, j)).ok()
    }

    /// `N_i^+`, sorted.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    /// `N_i^-`, sorted.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors[i].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.has_edge(i, i))
    }

    pub fn require_self_loops(&self) -> Result<()> {
        match (0..self.n).find(|&i| !self.has_edge(i, i)) {
            Some(i) => Err(Error::MissingSelfLoop(i)),
            None => Ok(()),
        }
    }

    pub fn require_no_self_loops(&self) -> Result<()> {
        match (0..self.n).find(|&i| self.has_edge(i, i)) {
            Some(i) => Err(Error::UnexpectedSelfLoop(i)),
            None => Ok(()),
        }
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.n {
            return Err(Error::NodeOutOfRange { node, n: self.n });
        }
        Ok(())
    }
}

/// True iff every node reaches every other node along directed paths.
///
/// Runs one forward and one backward search from node 0.
pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    if g.n == 0 {
        return false;
    }
    let covers = |adjacency: &[Vec<usize>]| {
        let mut seen = vec![false; g.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == g.n
    };
    covers(&g.out_neighbors) && covers(&g.in_neighbors)
}

/// Union of edge sets over graphs sharing one node set.
pub fn union_graphs<'a>(gs: impl IntoIterator<Item = &'a DirectedGraph>) -> Result<DirectedGraph> {
    let mut iter = gs.into_iter();
    let first = iter.next().ok_or(Error::EmptyGraph)?;
    let mut set: BTreeSet<_> = first.edges.iter().copied().collect();
    for g in iter {
        if g.n != first.n {
            return Err(Error::NodeCountMismatch {
                expected: first.n,
                actual: g.n,
            });
        }
        set.extend(g.edges.iter().copied());
    }
    Ok(DirectedGraph::from_set(first.n, set))
}

/// Nodes reachable from `origin` through an edge chain `e^{k1}, ..., e^{k2}`
/// with `e^k` taken from `gs[k]`.
///
/// The walk must use exactly one edge per graph, so a node without a
/// self-loop in some `G^k` cannot wait there.
pub fn reachable_set(
    gs: &[DirectedGraph],
    origin: usize,
    k1: usize,
    k2: usize,
) -> Result<BTreeSet<usize>> {
    if k1 > k2 {
        return Err(Error::InvalidRange { k1, k2 });
    }
    if k2 >= gs.len() {
        return Err(Error::MissingMatrix(k2));
    }
    let n = gs[k1].n;
    gs[k1].check_node(origin)?;
    let mut current = vec![false; n];
    current[origin] = true;
    for g in &gs[k1..=k2] {
        if g.n != n {
            return Err(Error::NodeCountMismatch {
                expected: n,
                actual: g.n,
            });
        }
        let mut next = vec![false; n];
        for &(i, j) in &g.edges {
            if current[i] {
                next[j] = true;
            }
        }
        current = next;
    }
    Ok((0..n).filter(|&i| current[i]).collect())
}

/// Graph of the thresholded matrix `[A]_alpha`: edge `(i, j)` iff
/// `A[j][i] >= alpha` and `A[j][i] > 0`.
///
/// Entries equal to `alpha` survive the threshold.
pub fn graph_of_matrix(a: &DenseMatrix, alpha: f64) -> Result<DirectedGraph> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "graph_of_matrix needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("threshold must be >= 0, got {alpha}"),
        });
    }
    let n = a.rows();
    let mut set = BTreeSet::new();
    for row in 0..n {
        for col in 0..n {
            let value = a[(row, col)];
            if value < 0.0 {
                return Err(Error::NegativeEntry { row, col, value });
            }
            if value > 0.0 && value >= alpha {
                set.insert((col, row));
            }
        }
    }
    Ok(DirectedGraph::from_set(n, set))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize)]) -> DirectedGraph {
        DirectedGraph::new(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn strong_connectivity_examples() {
        assert!(is_strongly_connected(&g(2, &[(0, 1), (1, 0)])));
        assert!(!is_strongly_connected(&g(2, &[(0, 1)])));
        assert!(is_strongly_connected(&DirectedGraph::ring(5).unwrap()));
        assert!(is_strongly_connected(&g(1, &[])));
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert_eq!(
            DirectedGraph::new(2, [(0, 2)]),
            Err(Error::NodeOutOfRange { node: 2, n: 2 })
        );
        assert_eq!(
            DirectedGraph::new(2, [(0, 1), (0, 1)]),
            Err(Error::DuplicateEdge(0, 1))
        );
    }

    #[test]
    fn edges_are_sorted_and_indexed() {
        let graph = g(3, &[(2, 0), (0, 2), (0, 1), (1, 2)]);
        assert_eq!(graph.edges(), &[(0, 1), (0, 2), (1, 2), (2, 0)]);
        assert_eq!(graph.edge_index(1, 2), Some(2));
        assert_eq!(graph.out_degree(0), 2);
        assert_eq!(graph.in_neighbors(2), &[0, 1]);
    }

    #[test]
    fn loop_policy_is_checked() {
        let ring = DirectedGraph::ring(3).unwrap();
        assert_eq!(
            ring.clone().with_policy(LoopPolicy::Required),
            Err(Error::MissingSelfLoop(0))
        );
        let looped = ring.with_self_loops();
        assert_eq!(looped.policy(), LoopPolicy::Required);
        assert_eq!(
            looped.clone().with_policy(LoopPolicy::Forbidden),
            Err(Error::UnexpectedSelfLoop(0))
        );
        assert_eq!(looped.without_self_loops().edges(), ring.edges());
    }

    #[test]
    fn union_examples() {
        let u = union_graphs([&g(2, &[(0, 1)]), &g(2, &[(1, 0)])]).unwrap();
        assert_eq!(u.edges(), &[(0, 1), (1, 0)]);
        let u = union_graphs([&g(2, &[]), &g(2, &[])]).unwrap();
        assert_eq!(u.edge_count(), 0);
        let u = union_graphs([&g(2, &[(0, 1)]), &g(2, &[(0, 1)])]).unwrap();
        assert_eq!(u.edges(), &[(0, 1)]);
        assert!(matches!(
            union_graphs([&g(2, &[]), &g(3, &[])]),
            Err(Error::NodeCountMismatch { .. })
        ));
    }

    #[test]
    fn reachable_set_examples() {
        let loops = DirectedGraph::empty(3).with_self_loops();
        let seq = vec![loops.clone(); 4];
        assert_eq!(reachable_set(&seq, 0, 0, 3).unwrap(), BTreeSet::from([0]));

        let g0 = DirectedGraph::empty(2)
            .with_self_loops()
            .with_edges([(0, 1)])
            .unwrap();
        let g1 = DirectedGraph::empty(2).with_self_loops();
        assert_eq!(
            reachable_set(&[g0, g1], 0, 0, 1).unwrap(),
            BTreeSet::from([0, 1])
        );

        let g0 = loops.with_edges([(0, 1)]).unwrap();
        let g1 = loops.with_edges([(1, 2)]).unwrap();
        assert_eq!(
            reachable_set(&[g0, g1], 0, 0, 1).unwrap(),
            BTreeSet::from([0, 1, 2])
        );

        assert_eq!(
            reachable_set(&[loops], 5, 0, 0),
            Err(Error::NodeOutOfRange { node: 5, n: 3 })
        );
    }

    #[test]
    fn graph_of_matrix_examples() {
        let id = DenseMatrix::identity(3);
        let graph = graph_of_matrix(&id, 0.0).unwrap();
        assert_eq!(graph.edges(), &[(0, 0), (1, 1), (2, 2)]);

        let below = DenseMatrix::from_rows(&[vec![0.6, 0.0], vec![0.4, 0.6]]).unwrap();
        assert!(!graph_of_matrix(&below, 0.5).unwrap().has_edge(0, 1));
        let above = DenseMatrix::from_rows(&[vec![0.4, 0.0], vec![0.6, 0.4]]).unwrap();
        assert!(graph_of_matrix(&above, 0.5).unwrap().has_edge(0, 1));

        let boundary = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(graph_of_matrix(&boundary, 0.5).unwrap().edge_count(), 4);

        let negative = DenseMatrix::from_rows(&[vec![1.0, -0.1], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            graph_of_matrix(&negative, 0.0),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn serde_literal_round_trip() {
        let graph = DirectedGraph::ring_with_chord(5).unwrap();
        let lit = GraphLiteral::from(graph.clone());
        assert_eq!(lit.nodes, 5);
        assert_eq!(DirectedGraph::try_from(lit).unwrap(), graph);
    }
}
