//! Stability enhancement: feed the spectrally critical inter-cluster edges
//! of the input manifold back into the original graph. Bridge-like edges
//! carry the highest sampling ratios, so inserting them strengthens exactly
//! the connections whose absence makes nodes fragile.

use crate::error::{Error, Result};
use crate::graph::{Edge, SparseGraph};
use crate::manifold::Manifold;

/// The inter-cluster edges of a manifold, with their weights.
pub fn inter_cluster_edges(m: &Manifold) -> Vec<Edge> {
    let edges = m.graph.edges();
    m.inter_edges.iter().map(|&i| edges[i]).collect()
}

/// Insert extra edges into a graph: weights are scaled by `weight_scale`
/// and merged additively with any existing edge.
pub fn enhance(g: &SparseGraph, extra: &[Edge], weight_scale: f64) -> Result<SparseGraph> {
    if !(weight_scale.is_finite() && weight_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight_scale must be positive, got {weight_scale}"
        )));
    }
    let n = g.n_nodes();
    let mut edges: Vec<(usize, usize, f64)> =
        g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
    for e in extra {
        if e.u >= n || e.v >= n {
            return Err(Error::NodeOutOfRange(e.u.max(e.v), n));
        }
        edges.push((e.u, e.v, e.w * weight_scale));
    }
    SparseGraph::new(n, edges)
}

/// Outcome of one enhancement comparison.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EnhancementOutcome {
    pub inserted_edges: usize,
    pub dice_level: usize,
    /// Mean KLD over the unstable segment, original graph.
    pub kld_original: f64,
    /// Mean KLD over the unstable segment, enhanced graph.
    pub kld_enhanced: f64,
    pub cos_original: f64,
    pub cos_enhanced: f64,
    /// Algebraic connectivity before and after.
    pub lambda2_original: f64,
    pub lambda2_enhanced: f64,
}

/// Compare the unstable segment's perturbation response on the original vs
/// the enhanced graph under one identical edge perturbation.
///
/// The perturbation delta is drawn once against the original graph and
/// applied to both, so the comparison isolates the inserted edges. Outputs
/// on each graph are compared against that same graph's clean outputs.
#[allow(clippy::too_many_arguments)]
pub fn enhancement_experiment(
    g: &SparseGraph,
    x: &crate::matrix::RowMatrix,
    labels: &[usize],
    weights: &crate::modelsim::SurrogateWeights,
    input_manifold: &Manifold,
    unstable: &[usize],
    dice_level: usize,
    weight_scale: f64,
    seed: u64,
) -> Result<EnhancementOutcome> {
    use crate::modelsim::{apply_dice, dice_delta, eval_pair, surrogate_forward};

    let extra = inter_cluster_edges(input_manifold);
    let enhanced = enhance(g, &extra, weight_scale)?;
    let delta = dice_delta(g, labels, dice_level, seed)?;

    let run = |graph: &SparseGraph| -> Result<(f64, f64)> {
        let clean = surrogate_forward(graph, x, weights)?;
        let perturbed = surrogate_forward(&apply_dice(graph, &delta)?, x, weights)?;
        let evals = eval_pair(&clean, &perturbed, unstable)?;
        let n = evals.len().max(1) as f64;
        Ok((
            evals.iter().map(|e| e.kld).sum::<f64>() / n,
            evals.iter().map(|e| e.cosine).sum::<f64>() / n,
        ))
    };
    let (kld_original, cos_original) = run(g)?;
    let (kld_enhanced, cos_enhanced) = run(&enhanced)?;
    let tol = crate::solver::DEFAULT_TOL;
    let lambda2_original = crate::solver::smallest_eigenpairs(&g.laplacian(), 1, tol, seed)?
        .values[0];
    let lambda2_enhanced =
        crate::solver::smallest_eigenpairs(&enhanced.laplacian(), 1, tol, seed)?.values[0];
    Ok(EnhancementOutcome {
        inserted_edges: extra.len(),
        dice_level,
        kld_original,
        kld_enhanced,
        cos_original,
        cos_enhanced,
        lambda2_original,
        lambda2_enhanced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{sparsify, ManifoldConfig};
    use crate::solver::smallest_eigenpairs;
    use crate::testutil::{random_graph, triangle};

    #[test]
    fn inter_edges_match_roles() {
        // Single cluster: nothing inter.
        let g = random_graph(12, 2);
        let cfg = ManifoldConfig {
            resistance_diameter: Some(1e12),
            exact_resistance_below: 10_000,
            ..Default::default()
        };
        let m = sparsify(&g, &cfg).unwrap();
        assert_eq!(m.clusters.n_clusters, 1);
        assert!(inter_cluster_edges(&m).is_empty());

        // All singletons: every edge comes back.
        let cfg = ManifoldConfig {
            resistance_diameter: Some(1e-12),
            exact_resistance_below: 10_000,
            ..Default::default()
        };
        let m = sparsify(&triangle(), &cfg).unwrap();
        let edges = inter_cluster_edges(&m);
        assert_eq!(edges.len(), 3);
        for e in &edges {
            assert_ne!(
                m.clusters.assignment[e.u],
                m.clusters.assignment[e.v],
                "returned edge does not cross clusters"
            );
        }
    }

    #[test]
    fn enhance_identity_and_merge() {
        let g = random_graph(10, 7);
        let same = enhance(&g, &[], 1.0).unwrap();
        assert_eq!(same.edges(), g.edges());

        // Re-inserting an existing edge at scale 1 doubles its weight.
        let e = g.edges()[0];
        let enhanced = enhance(&g, &[e], 1.0).unwrap();
        assert!((enhanced.edge_weight(e.u, e.v).unwrap() - 2.0 * e.w).abs() < 1e-12);

        assert!(enhance(&g, &[Edge::new(0, 99, 1.0)], 1.0).is_err());
    }

    #[test]
    fn zero_level_experiment_is_identical() {
        // No perturbation: both graphs reproduce their clean outputs, so
        // the metrics coincide (and the divergence is zero).
        let (g, labels) = crate::gen::sbm(&[15; 2], 0.5, 0.1, 5).unwrap();
        assert!(g.is_connected());
        let x = crate::gen::block_features(&labels, 4, 3.0, 0.5, 5).unwrap();
        let w = crate::modelsim::SurrogateWeights::random(4, 8, 2, 5);
        let cfg = ManifoldConfig {
            exact_resistance_below: 10_000,
            seed: 5,
            ..Default::default()
        };
        let mx = crate::manifold::build_input_manifold(&g, Some(&x), 10, &cfg).unwrap();
        let out = enhancement_experiment(&g, &x, &labels, &w, &mx, &[0, 1, 2], 0, 1.0, 5).unwrap();
        assert!((out.kld_original - out.kld_enhanced).abs() < 1e-12);
        assert!(out.kld_original.abs() < 1e-12);
        assert!((out.cos_original - 1.0).abs() < 1e-12);
        assert!((out.cos_enhanced - 1.0).abs() < 1e-12);
        assert_eq!(out.inserted_edges, inter_cluster_edges(&mx).len());
    }

    #[test]
    fn enhancement_never_decreases_connectivity() {
        // lambda_2 is monotone under edge insertion; checked against the
        // iterative solver on both graphs.
        let g = random_graph(40, 0xE5);
        let cfg = ManifoldConfig {
            target_clusters: Some(8),
            exact_resistance_below: 10_000,
            ..Default::default()
        };
        let m = sparsify(&g, &cfg).unwrap();
        let extra = inter_cluster_edges(&m);
        let enhanced = enhance(&g, &extra, 1.0).unwrap();
        assert_eq!(enhanced.n_nodes(), g.n_nodes());
        assert!(enhanced.n_edges() >= g.n_edges());

        let l2_before = smallest_eigenpairs(&g.laplacian(), 1, 1e-9, 4).unwrap().values[0];
        let l2_after = smallest_eigenpairs(&enhanced.laplacian(), 1, 1e-9, 4)
            .unwrap()
            .values[0];
        assert!(
            l2_after >= l2_before - 1e-8,
            "lambda_2 dropped: {l2_after} < {l2_before}"
        );
    }
}
