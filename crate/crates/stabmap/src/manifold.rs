//! Graph-based manifold construction: dense kNN graph, edge sampling
//! ratios, low-resistance-diameter decomposition, per-cluster spanning-tree
//! backbones, and the sparsified manifold they produce.
//!
//! The pruning pipeline keeps a minimum-resistance-length spanning tree per
//! cluster, re-adds intra-cluster edges whose sampling ratio
//! rho = w * d_eff clears a threshold, and keeps every inter-cluster edge.
//! Bridges have rho exactly 1, so spectrally critical edges survive by
//! construction.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::RowMatrix;
use crate::resistance::{estimate_resistance, exact_edge_resistances, krylov_basis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Construction parameters for kNN graphs and sparsification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldConfig {
    /// Neighbors per node in the dense kNN graph.
    pub knn_k: usize,
    /// Resistance budget per cluster. `None` auto-calibrates against
    /// `target_clusters`.
    pub resistance_diameter: Option<f64>,
    /// Desired cluster count for auto-calibration; `None` falls back to
    /// n / 3 (at least 2), which keeps clusters small enough that tree
    /// backbones stay spectrally tight.
    pub target_clusters: Option<usize>,
    /// Krylov order for resistance estimation on large graphs.
    pub krylov_m: usize,
    /// Intra-cluster edges with rho at or above this are kept besides the
    /// backbone.
    pub rho_keep_threshold: f64,
    /// Below this node count, edge resistances use exact solves.
    pub exact_resistance_below: usize,
    /// Floor on squared kNN distances (duplicate-row guard); weights are
    /// 1 / max(d^2, knn_eps).
    pub knn_eps: f64,
    pub seed: u64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            knn_k: 10,
            resistance_diameter: None,
            target_clusters: None,
            krylov_m: 10,
            rho_keep_threshold: 0.9,
            exact_resistance_below: 500,
            knn_eps: 1e-12,
            seed: 0,
        }
    }
}

impl ManifoldConfig {
    fn validate(&self) -> Result<()> {
        if self.knn_k < 2 {
            return Err(Error::InvalidArgument("knn_k must be at least 2".into()));
        }
        if let Some(d) = self.resistance_diameter {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "resistance_diameter must be positive, got {d}"
                )));
            }
        }
        if !(self.rho_keep_threshold > 0.0 && self.rho_keep_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_keep_threshold must lie in (0, 1], got {}",
                self.rho_keep_threshold
            )));
        }
        Ok(())
    }
}

/// Cluster assignment from the LRD decomposition. Cluster ids are dense and
/// numbered by their smallest member node.
#[derive(Debug, Clone)]
pub struct Clusters {
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    /// The diameter budget that produced this clustering.
    pub diameter: f64,
}

/// A sparsified graph-based manifold: the retained graph, the clustering
/// that guided pruning, edge roles, and per-retained-edge sampling ratios.
#[derive(Debug, Clone)]
pub struct Manifold {
    pub graph: SparseGraph,
    pub clusters: Clusters,
    /// Indices into `graph.edges()` that stay inside one cluster.
    pub intra_edges: Vec<usize>,
    /// Indices into `graph.edges()` that cross clusters.
    pub inter_edges: Vec<usize>,
    /// Sampling ratio rho = w * d_eff per retained edge, aligned with
    /// `graph.edges()`.
    pub rho: Vec<f64>,
    /// Snapshot of the construction parameters, with the effective diameter
    /// and resistance mode filled in.
    pub provenance: ManifoldProvenance,
}

/// Effective construction parameters recorded alongside a manifold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldProvenance {
    pub config: ManifoldConfig,
    pub effective_diameter: f64,
    pub exact_resistances: bool,
    pub dense_edges: usize,
    /// Bridge edges added to reconnect kNN components, if any.
    pub stitched_edges: usize,
}

impl Manifold {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    /// Check the structural invariants; used by tests and after
    /// deserialization.
    pub fn validate(&self) -> Result<()> {
        if !self.graph.is_connected() {
            return Err(Error::DisconnectedGraph {
                components: self.graph.connected_components().len(),
            });
        }
        let n_edges = self.graph.n_edges();
        if self.intra_edges.len() + self.inter_edges.len() != n_edges
            || self.rho.len() != n_edges
        {
            return Err(Error::DimensionMismatch {
                expected: n_edges,
                got: self.intra_edges.len() + self.inter_edges.len(),
            });
        }
        let edges = self.graph.edges();
        for &i in &self.intra_edges {
            let e = &edges[i];
            if self.clusters.assignment[e.u] != self.clusters.assignment[e.v] {
                return Err(Error::InvalidArgument(format!(
                    "intra edge {i} crosses clusters"
                )));
            }
        }
        for &i in &self.inter_edges {
            let e = &edges[i];
            if self.clusters.assignment[e.u] == self.clusters.assignment[e.v] {
                return Err(Error::InvalidArgument(format!(
                    "inter edge {i} stays inside a cluster"
                )));
            }
        }
        if self.provenance.exact_resistances {
            // Loose numerical guard: solver error on badly conditioned
            // weights can push rho slightly past 1. The strict bound is a
            // property of exact arithmetic and is asserted on controlled
            // instances in the test suite.
            for (&r, e) in self.rho.iter().zip(edges) {
                if !(r > 0.0 && r <= 1.0 + 1e-4) {
                    return Err(Error::InvalidArgument(format!(
                        "rho out of range on edge ({}, {}): {r}",
                        e.u, e.v
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Symmetric kNN graph over matrix rows: an edge appears when either
/// endpoint lists the other among its k nearest rows, with weight
/// 1 / max(||X_p - X_q||^2, 1e-12). The graph is restricted to its largest
/// connected component; the remap reports what survived.
pub fn knn_graph(rows: &RowMatrix, knn_k: usize) -> Result<(SparseGraph, crate::graph::NodeRemap)> {
    let full = knn_graph_full(rows, knn_k, 1e-12)?;
    let (graph, remap) = full.largest_component()?;
    Ok((graph, remap))
}

/// The kNN graph on the full row set, possibly disconnected.
fn knn_graph_full(rows: &RowMatrix, knn_k: usize, eps: f64) -> Result<SparseGraph> {
    let n = rows.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "kNN graph needs at least 2 rows, got {n}"
        )));
    }
    if !rows.is_finite() {
        return Err(Error::BadMatrixEntry {
            row: 0,
            reason: "non-finite row entry".into(),
        });
    }
    let k = knn_k.min(n - 1);
    // Neighbor lists in parallel; deterministic because each row's scan is
    // sequential and results land in per-row slots.
    let neighbor_lists: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (rows.row_dist2(i, j), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists
                .into_iter()
                .take(k)
                .map(|(d2, j)| (j, d2))
                .collect()
        })
        .collect();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, list) in neighbor_lists.iter().enumerate() {
        for &(j, d2) in list {
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                edges.push((key.0, key.1, 1.0 / d2.max(eps)));
            }
        }
    }
    SparseGraph::new(n, edges)
}

/// kNN graph that keeps every row: disconnected components are stitched to
/// the main component through their closest row pair, with the same
/// 1/d^2 weighting. Distant components therefore hang on high-resistance
/// bridges instead of being dropped. Returns the graph and the number of
/// stitch edges added.
pub fn knn_graph_stitched(rows: &RowMatrix, knn_k: usize) -> Result<(SparseGraph, usize)> {
    knn_graph_stitched_eps(rows, knn_k, 1e-12)
}

/// [`knn_graph_stitched`] with an explicit duplicate-row floor.
pub fn knn_graph_stitched_eps(
    rows: &RowMatrix,
    knn_k: usize,
    eps: f64,
) -> Result<(SparseGraph, usize)> {
    let g = knn_graph_full(rows, knn_k, eps)?;
    let comps = g.connected_components();
    if comps.len() == 1 {
        return Ok((g, 0));
    }
    let n = g.n_nodes();
    let mut comp_of = comps.assignment;
    let mut main: usize = {
        // Largest component, smallest id on ties (component ids are ordered
        // by smallest member).
        let mut best = 0;
        for (i, &s) in comps.sizes.iter().enumerate() {
            if s > comps.sizes[best] {
                best = i;
            }
        }
        best
    };
    let mut edges: Vec<(usize, usize, f64)> =
        g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
    let mut stitched = 0usize;
    loop {
        let outside: Vec<usize> = (0..n).filter(|&u| comp_of[u] != main).collect();
        if outside.is_empty() {
            break;
        }
        // Closest (outside, inside) row pair; ties resolved by node ids.
        let mut best: Option<(f64, usize, usize)> = None;
        for &u in &outside {
            for v in 0..n {
                if comp_of[v] != main {
                    continue;
                }
                let d2 = rows.row_dist2(u, v);
                let cand = (d2, u, v);
                best = match best {
                    None => Some(cand),
                    Some(cur) => {
                        if (cand.0, cand.1, cand.2) < (cur.0, cur.1, cur.2) {
                            Some(cand)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
        }
        let (d2, u, v) = best.expect("outside nonempty implies a candidate");
        edges.push((u.min(v), u.max(v), 1.0 / d2.max(eps)));
        stitched += 1;
        // Merge the two labels, keeping the smaller one for determinism.
        let absorbed = comp_of[u];
        let target = main.min(absorbed);
        let other = main.max(absorbed);
        for c in comp_of.iter_mut() {
            if *c == other {
                *c = target;
            }
        }
        main = target;
    }
    Ok((SparseGraph::new(n, edges)?, stitched))
}

/// Edge sampling ratios rho_e = w_e * d_eff_e, aligned with `g.edges()`.
pub fn edge_sampling_ratios(g: &SparseGraph, resistances: &[f64]) -> Result<Vec<f64>> {
    if resistances.len() != g.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: g.n_edges(),
            got: resistances.len(),
        });
    }
    Ok(g.edges()
        .iter()
        .zip(resistances)
        .map(|(e, &r)| e.w * r)
        .collect())
}

/// Edge resistances for sparsification: exact solves below the configured
/// node count, shared-basis Krylov estimates above. Returns values aligned
/// with `g.edges()` and whether they are exact.
pub fn edge_resistances(g: &SparseGraph, cfg: &ManifoldConfig) -> Result<(Vec<f64>, bool)> {
    if g.n_nodes() < cfg.exact_resistance_below {
        Ok((exact_edge_resistances(g, 1e-10)?, true))
    } else {
        let basis = krylov_basis(g, cfg.krylov_m, cfg.seed)?;
        let ests = g
            .edges()
            .par_iter()
            .map(|e| estimate_resistance(g, &basis, e.u, e.v))
            .collect::<Result<Vec<f64>>>()?;
        Ok((ests, false))
    }
}

// Union-find with path compression.
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller root wins so cluster ids stay tied to smallest members.
        let (keep, drop) = if ra <= rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop] = keep;
        keep
    }
}

// Quantizing to 12 significant digits keeps solver noise from reordering
// values that are equal in exact arithmetic; the id tie-break then applies.
use crate::io::round_sig12;

/// Deterministic contraction order: cheapest resistance first, ties by the
/// smaller then larger endpoint.
fn contraction_order(g: &SparseGraph, resistances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.n_edges()).collect();
    let edges = g.edges();
    order.sort_by(|&a, &b| {
        round_sig12(resistances[a])
            .total_cmp(&round_sig12(resistances[b]))
            .then(edges[a].u.cmp(&edges[b].u))
            .then(edges[a].v.cmp(&edges[b].v))
    });
    order
}

/// Greedy low-resistance-diameter contraction with a fixed budget: walk
/// edges by ascending resistance and contract whenever the merged node
/// weight eta(p) + eta(q) + d_eff(p, q) stays within the diameter. Once an
/// edge fails, it can never succeed later (weights only grow), so one pass
/// is exhaustive.
fn lrd_contract(g: &SparseGraph, resistances: &[f64], diameter: f64) -> Clusters {
    let n = g.n_nodes();
    let mut dsu = Dsu::new(n);
    let mut eta = vec![0.0f64; n];
    for &idx in &contraction_order(g, resistances) {
        let e = &g.edges()[idx];
        let (rp, rq) = (dsu.find(e.u), dsu.find(e.v));
        if rp == rq {
            continue;
        }
        // Quantized like the ordering, so budget checks agree with it.
        let merged = eta[rp] + eta[rq] + round_sig12(resistances[idx]);
        if merged <= diameter {
            let keep = dsu.union(rp, rq);
            eta[keep] = merged;
        }
    }
    // Dense cluster ids numbered by smallest member node.
    let mut id_of_root = std::collections::HashMap::new();
    let mut assignment = vec![0usize; n];
    let mut n_clusters = 0;
    for u in 0..n {
        let r = dsu.find(u);
        let id = *id_of_root.entry(r).or_insert_with(|| {
            let id = n_clusters;
            n_clusters += 1;
            id
        });
        assignment[u] = id;
    }
    Clusters {
        assignment,
        n_clusters,
        diameter,
    }
}

/// Pick a diameter whose cluster count comes closest to `target` by
/// bisection over the accumulated-resistance scale. Deterministic.
fn calibrate_diameter(g: &SparseGraph, resistances: &[f64], target: usize) -> f64 {
    let target = target.clamp(1, g.n_nodes());
    let total: f64 = resistances.iter().sum::<f64>().max(1e-12);
    let mut lo = 0.0f64; // all singletons
    let mut hi = total; // everything merges
    let mut best = (usize::MAX, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let clusters = lrd_contract(g, resistances, mid).n_clusters;
        let gap = clusters.abs_diff(target);
        if gap < best.0 || (gap == best.0 && mid < best.1) {
            best = (gap, mid);
        }
        if clusters > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.1
}

/// Low-resistance-diameter decomposition with the configured (or
/// auto-calibrated) budget.
pub fn lrd_decompose(g: &SparseGraph, cfg: &ManifoldConfig) -> Result<Clusters> {
    cfg.validate()?;
    if !g.is_connected() {
        return Err(Error::DisconnectedGraph {
            components: g.connected_components().len(),
        });
    }
    let (res, _) = edge_resistances(g, cfg)?;
    let diameter = effective_diameter(g, &res, cfg);
    Ok(lrd_contract(g, &res, diameter))
}

fn effective_diameter(g: &SparseGraph, resistances: &[f64], cfg: &ManifoldConfig) -> f64 {
    match cfg.resistance_diameter {
        Some(d) => d,
        None => {
            let target = cfg
                .target_clusters
                .unwrap_or_else(|| (g.n_nodes() / 3).max(2));
            calibrate_diameter(g, resistances, target)
        }
    }
}

/// Retained intra-cluster edges for one cluster: a spanning tree minimizing
/// total resistance length, plus every intra-cluster edge whose sampling
/// ratio clears the threshold.
pub fn cluster_backbone(
    g: &SparseGraph,
    resistances: &[f64],
    rho: &[f64],
    cluster_nodes: &[usize],
    cluster_edge_indices: &[usize],
    rho_keep_threshold: f64,
) -> Vec<usize> {
    let mut order = cluster_edge_indices.to_vec();
    let edges = g.edges();
    order.sort_by(|&a, &b| {
        round_sig12(resistances[a])
            .total_cmp(&round_sig12(resistances[b]))
            .then(edges[a].u.cmp(&edges[b].u))
            .then(edges[a].v.cmp(&edges[b].v))
    });
    // Kruskal on cluster-local ids.
    let local: std::collections::HashMap<usize, usize> = cluster_nodes
        .iter()
        .enumerate()
        .map(|(i, &u)| (u, i))
        .collect();
    let mut dsu = Dsu::new(cluster_nodes.len());
    let mut retained = Vec::new();
    for &idx in &order {
        let e = &edges[idx];
        let (lu, lv) = (local[&e.u], local[&e.v]);
        if dsu.find(lu) != dsu.find(lv) {
            dsu.union(lu, lv);
            retained.push(idx);
        } else if rho[idx] >= rho_keep_threshold {
            retained.push(idx);
        }
    }
    retained.sort_unstable();
    retained
}

/// Sparsify a connected dense graph: estimate per-edge resistances, run the
/// LRD decomposition, keep one backbone per cluster plus high-rho edges,
/// and keep every inter-cluster edge.
pub fn sparsify(g_dense: &SparseGraph, cfg: &ManifoldConfig) -> Result<Manifold> {
    cfg.validate()?;
    if !g_dense.is_connected() {
        return Err(Error::DisconnectedGraph {
            components: g_dense.connected_components().len(),
        });
    }
    let (res, exact) = edge_resistances(g_dense, cfg)?;
    let rho_dense = edge_sampling_ratios(g_dense, &res)?;
    let diameter = effective_diameter(g_dense, &res, cfg);
    let clusters = lrd_contract(g_dense, &res, diameter);

    // Partition edges by role on the dense graph.
    let edges = g_dense.edges();
    let mut cluster_nodes: Vec<Vec<usize>> = vec![Vec::new(); clusters.n_clusters];
    for u in 0..g_dense.n_nodes() {
        cluster_nodes[clusters.assignment[u]].push(u);
    }
    let mut cluster_edges: Vec<Vec<usize>> = vec![Vec::new(); clusters.n_clusters];
    let mut inter_dense: Vec<usize> = Vec::new();
    for (i, e) in edges.iter().enumerate() {
        let (cu, cv) = (clusters.assignment[e.u], clusters.assignment[e.v]);
        if cu == cv {
            cluster_edges[cu].push(i);
        } else {
            inter_dense.push(i);
        }
    }

    // Backbones per cluster, in parallel; results land in cluster slots.
    let retained_per_cluster: Vec<Vec<usize>> = cluster_nodes
        .par_iter()
        .zip(cluster_edges.par_iter())
        .map(|(nodes, edge_idx)| {
            cluster_backbone(g_dense, &res, &rho_dense, nodes, edge_idx, cfg.rho_keep_threshold)
        })
        .collect();

    let mut keep: Vec<usize> = inter_dense.clone();
    for r in &retained_per_cluster {
        keep.extend_from_slice(r);
    }
    keep.sort_unstable();

    let kept_edges: Vec<(usize, usize, f64)> =
        keep.iter().map(|&i| (edges[i].u, edges[i].v, edges[i].w)).collect();
    let graph = SparseGraph::new(g_dense.n_nodes(), kept_edges)?;

    // Re-derive roles and rho aligned with the new edge order. Edge keys are
    // unique, so the lookup is exact.
    let dense_index: std::collections::HashMap<(usize, usize), usize> = keep
        .iter()
        .map(|&i| ((edges[i].u, edges[i].v), i))
        .collect();
    let mut intra_edges = Vec::new();
    let mut inter_edges = Vec::new();
    let mut rho = Vec::with_capacity(graph.n_edges());
    for (j, e) in graph.edges().iter().enumerate() {
        let dense_i = dense_index[&(e.u, e.v)];
        rho.push(rho_dense[dense_i]);
        if clusters.assignment[e.u] == clusters.assignment[e.v] {
            intra_edges.push(j);
        } else {
            inter_edges.push(j);
        }
    }

    let manifold = Manifold {
        graph,
        clusters,
        intra_edges,
        inter_edges,
        rho,
        provenance: ManifoldProvenance {
            config: cfg.clone(),
            effective_diameter: diameter,
            exact_resistances: exact,
            dense_edges: g_dense.n_edges(),
            stitched_edges: 0,
        },
    };
    debug_assert!(manifold.validate().is_ok());
    Ok(manifold)
}

/// Log-likelihood style objective of the precision matrix
/// Theta = L + I/sigma^2 against data X:
/// logdet(Theta) - (1/k) Tr(X^T Theta X). Dense spectrum, capped.
pub fn pgm_objective(
    l: &crate::graph::Laplacian,
    x: &RowMatrix,
    k: usize,
    sigma: f64,
    oracle_cap: usize,
) -> Result<f64> {
    let n = l.n();
    if n > oracle_cap {
        return Err(Error::OracleCapExceeded { n, cap: oracle_cap });
    }
    if x.n_rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.n_rows(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let shift = 1.0 / (sigma * sigma);
    let eig = crate::dense::sym_eigen(&l.to_dense(), n);
    let logdet: f64 = eig.values.iter().map(|&v| (v.max(0.0) + shift).ln()).sum();
    let frob2: f64 = x.data().iter().map(|v| v * v).sum();
    let trace_term = l.smoothness(x.data(), x.n_cols())? + shift * frob2;
    Ok(logdet - trace_term / k as f64)
}

/// Input-side manifold: spectral embedding of the graph, feature
/// augmentation, kNN construction (stitched so every node survives), and
/// sparsification.
pub fn build_input_manifold(
    g: &SparseGraph,
    features: Option<&RowMatrix>,
    embed_k: usize,
    cfg: &ManifoldConfig,
) -> Result<Manifold> {
    let u = crate::embed::spectral_embed(g, embed_k, crate::solver::DEFAULT_TOL, cfg.seed)?;
    let rows = match features {
        Some(x) => crate::embed::augment_features(&u, x)?,
        None => crate::embed::augment_features(&u, &RowMatrix::zeros(0, 0))?,
    };
    build_manifold_from_rows(&rows, cfg, cfg.knn_eps)
}

/// Output-side manifold over the mapping's per-node output vectors.
///
/// Output rows are probability-scale (O(1) norms), and saturated mappings
/// produce exactly coincident rows; a floor below 1e-6 only manufactures
/// edge weights too extreme for f64 pencil solves, so the configured floor
/// is raised to at least 1e-6 here.
pub fn build_output_manifold(y: &RowMatrix, cfg: &ManifoldConfig) -> Result<Manifold> {
    build_manifold_from_rows(y, cfg, cfg.knn_eps.max(1e-6))
}

fn build_manifold_from_rows(rows: &RowMatrix, cfg: &ManifoldConfig, eps: f64) -> Result<Manifold> {
    let (dense, stitched) = knn_graph_stitched_eps(rows, cfg.knn_k, eps)?;
    let mut manifold = sparsify(&dense, cfg)?;
    manifold.provenance.stitched_edges = stitched;
    Ok(manifold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resistance::exact_edge_resistances;
    use crate::testutil::{path, random_graph, triangle};

    fn exact_cfg() -> ManifoldConfig {
        ManifoldConfig {
            exact_resistance_below: 10_000,
            ..ManifoldConfig::default()
        }
    }

    #[test]
    fn knn_two_points() {
        let rows = RowMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let (g, remap) = knn_graph(&rows, 2).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert!(remap.is_identity());
        // d^2 = 2, w = 0.5.
        assert!((g.edges()[0].w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn knn_collinear_points() {
        let rows = RowMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let (g, _) = knn_graph(&rows, 1).unwrap();
        // 0-1 at d^2 = 1 (w = 1); 2's nearest is 1 at d^2 = 4 (w = 0.25).
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.edge_weight(0, 1), Some(1.0));
        assert_eq!(g.edge_weight(1, 2), Some(0.25));
    }

    #[test]
    fn knn_symmetric_and_degree_bounded() {
        let (g0, labels) = crate::gen::sbm(&[40; 5], 0.5, 0.02, 11).unwrap();
        assert!(g0.is_connected());
        let u = crate::embed::spectral_embed(&g0, 12, 1e-8, 1).unwrap();
        let _ = labels;
        let (g, _) = knn_graph(u.matrix(), 10).unwrap();
        for u in 0..g.n_nodes() {
            // Out-degree is capped at k; hub rows pick up extra in-links, so
            // the symmetrized degree can exceed 2k. 3k holds on this instance.
            assert!(g.degree(u) <= 30, "degree {} exceeds 3k", g.degree(u));
            for (v, w) in g.neighbors(u) {
                assert_eq!(g.edge_weight(v, u), Some(w));
            }
        }
    }

    #[test]
    fn knn_duplicate_rows_clamped() {
        let rows = RowMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let (g, _) = knn_graph(&rows, 1).unwrap();
        // Identical rows produce the clamped weight 1e12 rather than an error.
        assert!(g.edge_weight(0, 1).unwrap() >= 1e11);
    }

    #[test]
    fn rho_closed_forms() {
        // Every tree edge is a bridge: rho exactly 1.
        let g = path(5);
        let res = exact_edge_resistances(&g, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&g, &res).unwrap();
        for r in &rho {
            assert!((r - 1.0).abs() < 1e-9);
        }

        // Unit triangle: every edge has rho = 2/3.
        let t = triangle();
        let res = exact_edge_resistances(&t, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&t, &res).unwrap();
        for r in &rho {
            assert!((r - 2.0 / 3.0).abs() < 1e-9);
        }

        assert!(edge_sampling_ratios(&t, &res[..2]).is_err());
    }

    #[test]
    fn rho_in_unit_interval_random() {
        let g = random_graph(50, 0xB0B);
        let res = exact_edge_resistances(&g, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&g, &res).unwrap();
        for (r, e) in rho.iter().zip(g.edges()) {
            assert!(
                *r > 0.0 && *r <= 1.0 + 1e-9,
                "rho = {r} on edge ({}, {})",
                e.u,
                e.v
            );
        }
    }

    #[test]
    fn lrd_extreme_diameters() {
        let g = random_graph(30, 4);
        let cfg = ManifoldConfig {
            resistance_diameter: Some(1e12),
            ..exact_cfg()
        };
        assert_eq!(lrd_decompose(&g, &cfg).unwrap().n_clusters, 1);

        let cfg = ManifoldConfig {
            resistance_diameter: Some(1e-15),
            ..exact_cfg()
        };
        assert_eq!(lrd_decompose(&g, &cfg).unwrap().n_clusters, 30);
    }

    #[test]
    fn lrd_path6_hand_trace() {
        // Unit P6 with budget 2: consecutive runs of three nodes.
        let g = path(6);
        let cfg = ManifoldConfig {
            resistance_diameter: Some(2.0),
            ..exact_cfg()
        };
        let c = lrd_decompose(&g, &cfg).unwrap();
        assert_eq!(c.assignment, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn lrd_cluster_count_monotone_in_diameter() {
        let g = random_graph(60, 0xF00);
        let mut last = usize::MAX;
        for d in [0.01, 0.05, 0.2, 0.8, 3.0, 12.0] {
            let cfg = ManifoldConfig {
                resistance_diameter: Some(d),
                ..exact_cfg()
            };
            let c = lrd_decompose(&g, &cfg).unwrap().n_clusters;
            assert!(c <= last, "clusters grew from {last} to {c} at diameter {d}");
            last = c;
        }
    }

    #[test]
    fn backbone_keeps_trees_intact() {
        let g = path(6);
        let res = exact_edge_resistances(&g, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&g, &res).unwrap();
        let nodes: Vec<usize> = (0..6).collect();
        let all: Vec<usize> = (0..g.n_edges()).collect();
        let kept = cluster_backbone(&g, &res, &rho, &nodes, &all, 0.9);
        assert_eq!(kept, all);
    }

    #[test]
    fn backbone_drops_triangle_chord() {
        let t = triangle();
        let res = exact_edge_resistances(&t, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&t, &res).unwrap();
        let nodes = vec![0, 1, 2];
        let all = vec![0, 1, 2];
        let kept = cluster_backbone(&t, &res, &rho, &nodes, &all, 0.9);
        // rho = 2/3 < 0.9 everywhere: only the two tree edges survive.
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn backbone_spans_cluster() {
        let g = random_graph(20, 0xDAD);
        let res = exact_edge_resistances(&g, 1e-11).unwrap();
        let rho = edge_sampling_ratios(&g, &res).unwrap();
        let nodes: Vec<usize> = (0..20).collect();
        let all: Vec<usize> = (0..g.n_edges()).collect();
        let kept = cluster_backbone(&g, &res, &rho, &nodes, &all, 0.9);
        let sub = SparseGraph::new(
            20,
            kept.iter().map(|&i| {
                let e = &g.edges()[i];
                (e.u, e.v, e.w)
            }),
        )
        .unwrap();
        assert!(sub.is_connected());
    }

    #[test]
    fn sparsify_tree_is_identity() {
        let g = path(8);
        let m = sparsify(&g, &exact_cfg()).unwrap();
        assert_eq!(m.graph.n_edges(), 7);
        assert_eq!(m.graph.edges(), g.edges());
        m.validate().unwrap();
    }

    #[test]
    fn sparsify_triangle_singletons_keeps_all() {
        let t = triangle();
        let cfg = ManifoldConfig {
            resistance_diameter: Some(1e-12),
            ..exact_cfg()
        };
        let m = sparsify(&t, &cfg).unwrap();
        assert_eq!(m.clusters.n_clusters, 3);
        assert_eq!(m.graph.n_edges(), 3);
        assert_eq!(m.inter_edges.len(), 3);
        m.validate().unwrap();
    }

    #[test]
    fn sparsify_spectral_quality_on_sbm_knn() {
        // Quadratic-form ratios on random deflated probes stay within a
        // moderate band.
        let (g0, _) = crate::gen::sbm(&[60; 5], 0.5, 0.02, 21).unwrap();
        assert!(g0.is_connected());
        let u = crate::embed::spectral_embed(&g0, 20, 1e-8, 2).unwrap();
        let (dense, _) = knn_graph_stitched(u.matrix(), 10).unwrap();
        let m = sparsify(&dense, &exact_cfg()).unwrap();
        m.validate().unwrap();
        assert!(m.graph.n_edges() <= dense.n_edges());

        let lg = dense.laplacian();
        let lh = m.graph.laplacian();
        let mut rng = crate::rng::stream_rng(7, "probe");
        let n = dense.n_nodes();
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
            crate::graph::project_off_ones(&mut x);
            let rg = lg.quadratic_form(&x).unwrap();
            let rh = lh.quadratic_form(&x).unwrap();
            let ratio = rh / rg;
            assert!(
                (1.0 / 3.0..=3.0).contains(&ratio),
                "quadratic form ratio {ratio}"
            );
        }
    }

    #[test]
    fn pgm_objective_cases() {
        // Empty graph, sigma = 1: logdet(I) = 0.
        let g = SparseGraph::new(3, []).unwrap();
        let x = RowMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0], vec![1.0, 1.0]]).unwrap();
        let frob2: f64 = x.data().iter().map(|v| v * v).sum();
        let f = pgm_objective(&g.laplacian(), &x, 2, 1.0, 100).unwrap();
        assert!((f + frob2 / 2.0).abs() < 1e-10);

        // Single unit edge, sigma = 1, X = 0: logdet {1, 3} = ln 3.
        let g = SparseGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let x = RowMatrix::zeros(2, 1);
        let f = pgm_objective(&g.laplacian(), &x, 1, 1.0, 100).unwrap();
        assert!((f - 3.0f64.ln()).abs() < 1e-10);

        assert!(pgm_objective(&g.laplacian(), &x, 1, 1.0, 1).is_err());
    }

    #[test]
    fn sparsify_preserves_pgm_objective_on_sbm() {
        let (g0, _) = crate::gen::sbm(&[40; 5], 0.5, 0.02, 31).unwrap();
        assert!(g0.is_connected());
        let u = crate::embed::spectral_embed(&g0, 20, 1e-8, 2).unwrap();
        let rows = crate::embed::augment_features(&u, &RowMatrix::zeros(0, 0)).unwrap();
        let (dense, _) = knn_graph_stitched(&rows, 10).unwrap();
        let m = sparsify(&dense, &exact_cfg()).unwrap();
        let f_dense = pgm_objective(&dense.laplacian(), &rows, rows.n_cols(), 1e3, 2000).unwrap();
        let f_sparse = pgm_objective(&m.graph.laplacian(), &rows, rows.n_cols(), 1e3, 2000).unwrap();
        assert!(
            f_sparse >= f_dense - 0.10 * f_dense.abs(),
            "objective dropped too far: {f_sparse} vs {f_dense}"
        );
    }

    #[test]
    fn input_manifold_contracts() {
        let (g, labels) = crate::gen::sbm(&[30; 4], 0.5, 0.03, 41).unwrap();
        assert!(g.is_connected());
        let x = crate::gen::block_features(&labels, 6, 3.0, 0.3, 5).unwrap();
        let cfg = ManifoldConfig {
            target_clusters: Some(12),
            ..exact_cfg()
        };
        let m = build_input_manifold(&g, Some(&x), 15, &cfg).unwrap();
        assert_eq!(m.n_nodes(), g.n_nodes());
        assert!(m.graph.is_connected());
        m.validate().unwrap();

        // Resistance structure of the original graph survives into the
        // manifold.
        let pairs = crate::embed::sample_pairs(g.n_nodes(), 100, 3);
        let orig: Vec<f64> = pairs
            .iter()
            .map(|&(p, q)| crate::resistance::exact_resistance(&g, p, q, 1e-10).unwrap())
            .collect();
        let man: Vec<f64> = pairs
            .iter()
            .map(|&(p, q)| crate::resistance::exact_resistance(&m.graph, p, q, 1e-10).unwrap())
            .collect();
        let cc = crate::embed::pearson(&orig, &man);
        assert!(cc >= 0.5, "manifold resistance correlation {cc}");
    }

    #[test]
    fn output_manifold_one_hot_blocks() {
        // One-hot blocks: distinct one-hots sit at squared distance 2, so
        // inter-block edges carry weight about 1/2.
        let mut rows = Vec::new();
        for b in 0..3usize {
            for i in 0..5usize {
                let mut r = vec![0.0; 3];
                r[b] = 1.0;
                // Tiny deterministic jitter so rows are not exactly equal.
                r[(b + 1) % 3] = 1e-6 * (i as f64 + 1.0);
                rows.push(r);
            }
        }
        let y = RowMatrix::from_rows(&rows).unwrap();
        let cfg = ManifoldConfig {
            knn_k: 4,
            target_clusters: Some(3),
            ..exact_cfg()
        };
        let m = build_output_manifold(&y, &cfg).unwrap();
        assert!(m.graph.is_connected());
        assert_eq!(m.n_nodes(), 15);
        for e in m.graph.edges() {
            let same_block = e.u / 5 == e.v / 5;
            if !same_block {
                assert!(
                    (e.w - 0.5).abs() < 0.01,
                    "cross-block weight {} on ({}, {})",
                    e.w,
                    e.u,
                    e.v
                );
            }
        }
        m.validate().unwrap();
    }
}
