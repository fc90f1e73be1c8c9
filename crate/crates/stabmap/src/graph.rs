//! Sparse undirected weighted graphs and their Laplacians.
//!
//! `SparseGraph` is the substrate everything else operates on: input graphs,
//! kNN graphs, and sparsified manifolds. Storage is a canonical edge list
//! (u < v, sorted) plus a CSR adjacency for traversal and matrix-vector
//! products. Graphs are immutable after construction.

use crate::error::{Error, Result};

/// One undirected edge with a strictly positive weight. Canonical form has
/// `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, w: f64) -> Self {
        if u <= v {
            Edge { u, v, w }
        } else {
            Edge { u: v, v: u, w }
        }
    }

    /// Smaller endpoint first, for deterministic ordering.
    pub fn key(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// Counters from graph ingestion: how many raw entries were cleaned up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    /// Self-loops dropped (they contribute nothing to the Laplacian).
    pub self_loops_dropped: usize,
    /// Parallel edges merged by summing weights.
    pub parallel_merged: usize,
}

/// Undirected weighted graph with no self-loops and at most one edge per
/// unordered pair. Adjacency is stored symmetrically in CSR form.
#[derive(Debug, Clone)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<Edge>,
    adj_offsets: Vec<usize>,
    adj_targets: Vec<usize>,
    adj_weights: Vec<f64>,
}

impl SparseGraph {
    /// Build a graph from raw (u, v, w) triples. Self-loops are dropped and
    /// parallel edges merged by summing weights; weights must be positive
    /// and finite.
    pub fn new(n_nodes: usize, raw: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        Self::with_stats(n_nodes, raw).map(|(g, _)| g)
    }

    /// Same as [`SparseGraph::new`] but also reports what was cleaned up.
    pub fn with_stats(
        n_nodes: usize,
        raw: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<(Self, IngestStats)> {
        let mut stats = IngestStats::default();
        let mut edges: Vec<Edge> = Vec::new();
        for (u, v, w) in raw {
            if u >= n_nodes {
                return Err(Error::NodeOutOfRange(u, n_nodes));
            }
            if v >= n_nodes {
                return Err(Error::NodeOutOfRange(v, n_nodes));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { u, v, weight: w });
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            edges.push(Edge::new(u, v, w));
        }
        edges.sort_by(|a, b| a.key().cmp(&b.key()));
        // Merge parallels in place.
        let mut merged: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match merged.last_mut() {
                Some(last) if last.key() == e.key() => {
                    last.w += e.w;
                    stats.parallel_merged += 1;
                }
                _ => merged.push(e),
            }
        }
        Ok((Self::from_canonical(n_nodes, merged), stats))
    }

    fn from_canonical(n: usize, edges: Vec<Edge>) -> Self {
        let mut degree_count = vec![0usize; n];
        for e in &edges {
            degree_count[e.u] += 1;
            degree_count[e.v] += 1;
        }
        let mut adj_offsets = vec![0usize; n + 1];
        for i in 0..n {
            adj_offsets[i + 1] = adj_offsets[i] + degree_count[i];
        }
        let nnz = adj_offsets[n];
        let mut adj_targets = vec![0usize; nnz];
        let mut adj_weights = vec![0.0f64; nnz];
        let mut cursor = adj_offsets.clone();
        for e in &edges {
            adj_targets[cursor[e.u]] = e.v;
            adj_weights[cursor[e.u]] = e.w;
            cursor[e.u] += 1;
            adj_targets[cursor[e.v]] = e.u;
            adj_weights[cursor[e.v]] = e.w;
            cursor[e.v] += 1;
        }
        SparseGraph {
            n,
            edges,
            adj_offsets,
            adj_targets,
            adj_weights,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted by (min endpoint, max endpoint).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `u` with edge weights.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.adj_offsets[u];
        let hi = self.adj_offsets[u + 1];
        self.adj_targets[lo..hi]
            .iter()
            .copied()
            .zip(self.adj_weights[lo..hi].iter().copied())
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj_offsets[u + 1] - self.adj_offsets[u]
    }

    /// Weighted degree (sum of incident edge weights).
    pub fn weighted_degree(&self, u: usize) -> f64 {
        self.neighbors(u).map(|(_, w)| w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Weight of edge (u, v), if present.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.neighbors(u).find(|&(t, _)| t == v).map(|(_, w)| w)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_weight(u, v).is_some()
    }

    /// y = A x with A the symmetric weighted adjacency matrix.
    pub fn adjacency_matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for u in 0..self.n {
            let mut acc = 0.0;
            for (v, w) in self.neighbors(u) {
                acc += w * x[v];
            }
            y[u] = acc;
        }
    }

    /// Connected components; each node is assigned the index of its
    /// component, components numbered in order of their smallest node id.
    pub fn connected_components(&self) -> Components {
        let mut comp = vec![usize::MAX; self.n];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0usize;
            stack.push(start);
            comp[start] = id;
            while let Some(u) = stack.pop() {
                size += 1;
                for (v, _) in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        Components {
            assignment: comp,
            sizes,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.connected_components().sizes.len() == 1
    }

    /// Induced subgraph on the largest connected component, together with the
    /// mapping old id -> new id. Ties between equal-size components go to the
    /// one containing the smallest node id.
    pub fn largest_component(&self) -> Result<(SparseGraph, NodeRemap)> {
        if self.n == 0 {
            return Err(Error::EmptyGraph);
        }
        let comps = self.connected_components();
        // Components are numbered by smallest contained node id, so max_by on
        // size with earlier index winning ties gives the documented rule.
        let mut best = 0usize;
        for (i, &s) in comps.sizes.iter().enumerate() {
            if s > comps.sizes[best] {
                best = i;
            }
        }
        let mut old_to_new = vec![None; self.n];
        let mut new_to_old = Vec::with_capacity(comps.sizes[best]);
        for u in 0..self.n {
            if comps.assignment[u] == best {
                old_to_new[u] = Some(new_to_old.len());
                new_to_old.push(u);
            }
        }
        let sub_edges: Vec<Edge> = self
            .edges
            .iter()
            .filter_map(|e| match (old_to_new[e.u], old_to_new[e.v]) {
                (Some(u), Some(v)) => Some(Edge::new(u, v, e.w)),
                _ => None,
            })
            .collect();
        let g = SparseGraph::from_canonical(new_to_old.len(), sub_edges);
        Ok((
            g,
            NodeRemap {
                old_to_new,
                new_to_old,
            },
        ))
    }

    /// Laplacian L = D - A.
    pub fn laplacian(&self) -> Laplacian {
        Laplacian::from_graph(self)
    }
}

/// Result of a connected-components sweep.
#[derive(Debug, Clone)]
pub struct Components {
    /// Component index per node.
    pub assignment: Vec<usize>,
    /// Size of each component.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// Bijective remapping produced by [`SparseGraph::largest_component`].
#[derive(Debug, Clone)]
pub struct NodeRemap {
    /// `old_to_new[old] = Some(new)` for retained nodes.
    pub old_to_new: Vec<Option<usize>>,
    /// `new_to_old[new] = old`.
    pub new_to_old: Vec<usize>,
}

impl NodeRemap {
    pub fn identity(n: usize) -> Self {
        NodeRemap {
            old_to_new: (0..n).map(Some).collect(),
            new_to_old: (0..n).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.old_to_new.len() == self.new_to_old.len()
            && self.new_to_old.iter().enumerate().all(|(i, &o)| i == o)
    }
}

/// Sparse symmetric Laplacian L = D - A with a cached degree vector.
///
/// Rows sum to zero, the diagonal is nonnegative, off-diagonals are
/// nonpositive, and L is positive semidefinite by construction.
#[derive(Debug, Clone)]
pub struct Laplacian {
    n: usize,
    degrees: Vec<f64>,
    adj_offsets: Vec<usize>,
    adj_targets: Vec<usize>,
    adj_weights: Vec<f64>,
}

impl Laplacian {
    fn from_graph(g: &SparseGraph) -> Self {
        let degrees = (0..g.n).map(|u| g.weighted_degree(u)).collect();
        Laplacian {
            n: g.n,
            degrees,
            adj_offsets: g.adj_offsets.clone(),
            adj_targets: g.adj_targets.clone(),
            adj_weights: g.adj_weights.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weighted degree vector (the diagonal of L).
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// y = L x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for u in 0..self.n {
            let lo = self.adj_offsets[u];
            let hi = self.adj_offsets[u + 1];
            let mut acc = self.degrees[u] * x[u];
            for k in lo..hi {
                acc -= self.adj_weights[k] * x[self.adj_targets[k]];
            }
            y[u] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// x^T L x, computed as the weighted sum of squared edge differences.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        for u in 0..self.n {
            let lo = self.adj_offsets[u];
            let hi = self.adj_offsets[u + 1];
            for k in lo..hi {
                let v = self.adj_targets[k];
                if v > u {
                    let d = x[u] - x[v];
                    acc += self.adj_weights[k] * d * d;
                }
            }
        }
        Ok(acc)
    }

    /// Tr(X^T L X): the quadratic form summed over the columns of a
    /// row-major n x d matrix.
    pub fn smoothness(&self, x: &[f64], d: usize) -> Result<f64> {
        if d == 0 {
            return Ok(0.0);
        }
        if x.len() != self.n * d {
            return Err(Error::DimensionMismatch {
                expected: self.n * d,
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        for u in 0..self.n {
            let lo = self.adj_offsets[u];
            let hi = self.adj_offsets[u + 1];
            for k in lo..hi {
                let v = self.adj_targets[k];
                if v > u {
                    let w = self.adj_weights[k];
                    let ru = &x[u * d..(u + 1) * d];
                    let rv = &x[v * d..(v + 1) * d];
                    let mut dist2 = 0.0;
                    for j in 0..d {
                        let diff = ru[j] - rv[j];
                        dist2 += diff * diff;
                    }
                    acc += w * dist2;
                }
            }
        }
        Ok(acc)
    }

    /// Number of connected components of the underlying graph.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0usize;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                let lo = self.adj_offsets[u];
                let hi = self.adj_offsets[u + 1];
                for &v in &self.adj_targets[lo..hi] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Dense row-major copy of L, for oracles and small problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for u in 0..n {
            m[u * n + u] = self.degrees[u];
            let lo = self.adj_offsets[u];
            let hi = self.adj_offsets[u + 1];
            for k in lo..hi {
                m[u * n + self.adj_targets[k]] = -self.adj_weights[k];
            }
        }
        m
    }
}

/// Project `x` onto the orthogonal complement of the all-ones vector.
pub fn project_off_ones(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}
