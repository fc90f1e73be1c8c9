//! Distance-mapping distortion between input and output manifolds, and the
//! per-node stability scores built on it.
//!
//! The distortion of a node pair is the ratio of its effective resistance on
//! the output manifold to the one on the input manifold. The top generalized
//! eigenpairs of the Laplacian pencil (L_X, L_Y) bound the worst pair, and
//! embedding nodes by those eigenpairs turns the bound into cheap per-edge
//! and per-node scores: nodes whose neighborhoods stretch the most under the
//! mapping rank as unstable.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::manifold::Manifold;
use crate::matrix::RowMatrix;
use crate::resistance::exact_resistance;
use crate::rng::stream_rng;
use crate::solver::{dense_pseudoinverse, GeneralizedSpectrum};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-node and per-edge stability scores, plus the spectrum they came from.
#[derive(Debug, Clone)]
pub struct StabilityScores {
    /// Mean squared embedding stretch around each node; the +inf sentinel
    /// marks nodes isolated in the input manifold (excluded from rankings).
    pub node_scores: Vec<f64>,
    /// Score per input-manifold edge, aligned with `graph.edges()`.
    pub edge_scores: Vec<f64>,
    pub spectrum: GeneralizedSpectrum,
    pub s: usize,
}

/// One ranked row of a stability report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: u64,
    pub score: f64,
    pub rank: usize,
    pub cluster: usize,
}

/// Ranked stability output, serializable with a stable field order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// All ranked nodes, descending score; ties broken by node id.
    pub nodes: Vec<NodeEntry>,
    /// Bottom fraction: the most stable node ids.
    pub stable: Vec<u64>,
    /// Top fraction: the most unstable node ids.
    pub unstable: Vec<u64>,
    /// Largest generalized eigenvalue of the pencil (the distortion bound).
    pub lambda_max: f64,
    /// Estimated maximum pairwise distortion.
    pub dmd_max: f64,
    /// "exhaustive" below the oracle cap, "sampled" above.
    pub dmd_max_mode: String,
    pub s: usize,
    pub fraction: f64,
    /// Nodes excluded from the ranking (isolated in the input manifold).
    pub isolated: Vec<u64>,
    /// Effective parameter snapshot for provenance.
    pub config: BTreeMap<String, String>,
}

fn check_pair(n: usize, p: usize, q: usize) -> Result<()> {
    if p >= n {
        return Err(Error::NodeOutOfRange(p, n));
    }
    if q >= n {
        return Err(Error::NodeOutOfRange(q, n));
    }
    if p == q {
        return Err(Error::InvalidArgument(
            "distortion needs two distinct nodes".into(),
        ));
    }
    Ok(())
}

/// Distance-mapping distortion of one pair: effective resistance on the
/// output manifold over effective resistance on the input manifold.
pub fn dmd_pair(g_x: &SparseGraph, g_y: &SparseGraph, p: usize, q: usize) -> Result<f64> {
    if g_x.n_nodes() != g_y.n_nodes() {
        return Err(Error::NodeSetMismatch {
            left: g_x.n_nodes(),
            right: g_y.n_nodes(),
        });
    }
    check_pair(g_x.n_nodes(), p, q)?;
    let dx = exact_resistance(g_x, p, q, 1e-10)?;
    let dy = exact_resistance(g_y, p, q, 1e-10)?;
    Ok(dy / dx)
}

/// How the maximum distortion was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdMaxMode {
    Exhaustive,
    Sampled,
}

impl DmdMaxMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DmdMaxMode::Exhaustive => "exhaustive",
            DmdMaxMode::Sampled => "sampled",
        }
    }
}

/// Maximum pairwise distortion. Exhaustive over all pairs through dense
/// pseudoinverses up to `exhaustive_cap` nodes; above that, all pairs among
/// ~sqrt(2 * sample_budget) sampled nodes via linear solves.
pub fn dmd_max(
    g_x: &SparseGraph,
    g_y: &SparseGraph,
    exhaustive_cap: usize,
    sample_budget: usize,
    seed: u64,
) -> Result<(f64, DmdMaxMode)> {
    let n = g_x.n_nodes();
    if n != g_y.n_nodes() {
        return Err(Error::NodeSetMismatch {
            left: n,
            right: g_y.n_nodes(),
        });
    }
    if n < 2 {
        return Err(Error::EmptyGraph);
    }
    if n <= exhaustive_cap {
        let px = dense_pseudoinverse(&g_x.laplacian(), exhaustive_cap)?;
        let py = dense_pseudoinverse(&g_y.laplacian(), exhaustive_cap)?;
        let max = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut local_max = f64::NEG_INFINITY;
                for q in (p + 1)..n {
                    let dx = crate::dense::resistance_from_pinv(&px, n, p, q);
                    let dy = crate::dense::resistance_from_pinv(&py, n, p, q);
                    local_max = local_max.max(dy / dx);
                }
                local_max
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        Ok((max, DmdMaxMode::Exhaustive))
    } else {
        let k = (((2 * sample_budget) as f64).sqrt().ceil() as usize).clamp(2, n);
        let mut rng = stream_rng(seed, "dmd-max-sample");
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        ids.truncate(k);
        ids.sort_unstable();
        let lx = g_x.laplacian();
        let ly = g_y.laplacian();
        // One solve per sampled node and side gives every pairwise
        // resistance among the sample.
        let solve_cols = |lap: &crate::graph::Laplacian| -> Result<Vec<Vec<f64>>> {
            ids.iter()
                .map(|&p| {
                    let mut b = vec![0.0; n];
                    b[p] = 1.0;
                    crate::solver::laplacian_solve(lap, &b, 1e-10)
                })
                .collect()
        };
        let cols_x = solve_cols(&lx)?;
        let cols_y = solve_cols(&ly)?;
        let mut max = f64::NEG_INFINITY;
        for (i, &p) in ids.iter().enumerate() {
            for (j, &q) in ids.iter().enumerate().skip(i + 1) {
                let dx = cols_x[i][p] - cols_x[i][q] - cols_x[j][p] + cols_x[j][q];
                let dy = cols_y[i][p] - cols_y[i][q] - cols_y[j][p] + cols_y[j][q];
                max = max.max(dy / dx);
            }
        }
        Ok((max, DmdMaxMode::Sampled))
    }
}

/// Weighted eigensubspace: row p stacks v_i(p) * sqrt(zeta_i) over the top
/// generalized eigenpairs, embedding each node in s dimensions.
pub fn eigensubspace(spectrum: &GeneralizedSpectrum) -> RowMatrix {
    let n = spectrum.n();
    let s = spectrum.s();
    let mut vs = RowMatrix::zeros(n, s);
    for j in 0..s {
        let w = spectrum.values[j].max(0.0).sqrt();
        let v = spectrum.vector(j);
        for i in 0..n {
            vs.set(i, j, v[i] * w);
        }
    }
    vs
}

/// Squared embedding distance between the endpoints of a candidate edge.
pub fn edge_stability(vs: &RowMatrix, p: usize, q: usize) -> Result<f64> {
    check_pair(vs.n_rows(), p, q)?;
    Ok(vs.row_dist2(p, q))
}

/// Stability score of one node: mean edge stability over its neighbors in
/// the input manifold.
pub fn node_score(vs: &RowMatrix, g_x: &Manifold, p: usize) -> Result<f64> {
    let n = vs.n_rows();
    if p >= n {
        return Err(Error::NodeOutOfRange(p, n));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (q, _) in g_x.graph.neighbors(p) {
        total += vs.row_dist2(p, q);
        count += 1;
    }
    if count == 0 {
        return Err(Error::IsolatedNode(p));
    }
    Ok(total / count as f64)
}

/// Node and edge scores for the whole input manifold. Isolated nodes (which
/// the connectivity invariants rule out, but deserialized inputs might
/// contain) get the +inf sentinel.
pub fn stability_scores(spectrum: &GeneralizedSpectrum, g_x: &Manifold) -> StabilityScores {
    let vs = eigensubspace(spectrum);
    let n = vs.n_rows();
    let node_scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| match node_score(&vs, g_x, p) {
            Ok(v) => v,
            Err(_) => f64::INFINITY,
        })
        .collect();
    let edge_scores: Vec<f64> = g_x
        .graph
        .edges()
        .par_iter()
        .map(|e| vs.row_dist2(e.u, e.v))
        .collect();
    StabilityScores {
        node_scores,
        edge_scores,
        spectrum: spectrum.clone(),
        s: spectrum.s(),
    }
}

/// Upper bound on the best Lipschitz constant of the mapping between the
/// manifolds: the top generalized eigenvalue.
pub fn lipschitz_bound(spectrum: &GeneralizedSpectrum) -> f64 {
    spectrum.values.first().copied().unwrap_or(f64::NAN)
}

/// Cut-mapping distortion of a node subset: total crossing weight in the
/// output manifold over total crossing weight in the input manifold.
pub fn cmd(g_x: &SparseGraph, g_y: &SparseGraph, subset: &[usize]) -> Result<f64> {
    let n = g_x.n_nodes();
    if g_y.n_nodes() != n {
        return Err(Error::NodeSetMismatch {
            left: n,
            right: g_y.n_nodes(),
        });
    }
    if subset.is_empty() || subset.len() >= n {
        return Err(Error::InvalidArgument(
            "subset must be nonempty and proper".into(),
        ));
    }
    let mut in_s = vec![false; n];
    for &u in subset {
        if u >= n {
            return Err(Error::NodeOutOfRange(u, n));
        }
        in_s[u] = true;
    }
    let cut = |g: &SparseGraph| -> f64 {
        g.edges()
            .iter()
            .filter(|e| in_s[e.u] != in_s[e.v])
            .map(|e| e.w)
            .sum()
    };
    let cut_x = cut(g_x);
    if cut_x <= 0.0 {
        return Err(Error::ZeroCut);
    }
    Ok(cut(g_y) / cut_x)
}

/// Sorted ranking: descending score, ties broken by ascending node id.
/// Nodes carrying the +inf sentinel are reported separately and excluded.
fn ranking(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut isolated = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(scores.len());
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() {
            order.push(i);
        } else {
            isolated.push(i);
        }
    }
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    (order, isolated)
}

/// Rank nodes by score and select the top/bottom fraction as the unstable
/// and stable sets.
pub fn rank_and_select(
    scores: &StabilityScores,
    clusters: &[usize],
    fraction: f64,
    node_ids: Option<&[u64]>,
    dmd_max: f64,
    dmd_max_mode: DmdMaxMode,
    config: BTreeMap<String, String>,
) -> Result<StabilityReport> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 0.5], got {fraction}"
        )));
    }
    let n = scores.node_scores.len();
    let id_of = |i: usize| -> u64 {
        match node_ids {
            Some(ids) => ids[i],
            None => i as u64,
        }
    };
    let (order, isolated) = ranking(&scores.node_scores);
    let ranked = order.len();
    let take = ((fraction * n as f64).ceil() as usize).min(ranked / 2).max(usize::from(ranked >= 2));
    let nodes: Vec<NodeEntry> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| NodeEntry {
            id: id_of(i),
            score: scores.node_scores[i],
            rank: rank + 1,
            cluster: clusters.get(i).copied().unwrap_or(0),
        })
        .collect();
    let unstable: Vec<u64> = order[..take].iter().map(|&i| id_of(i)).collect();
    let stable: Vec<u64> = order[ranked - take..].iter().map(|&i| id_of(i)).collect();
    Ok(StabilityReport {
        nodes,
        stable,
        unstable,
        lambda_max: lipschitz_bound(&scores.spectrum),
        dmd_max,
        dmd_max_mode: dmd_max_mode.as_str().to_string(),
        s: scores.s,
        fraction,
        isolated: isolated.iter().map(|&i| id_of(i)).collect(),
        config,
    })
}

/// Split nodes into consecutive score segments (most stable first) by the
/// given fractions, e.g. [0.2, 0.6, 0.2]. The last segment absorbs rounding
/// leftovers. Isolated nodes are dropped.
pub fn segment_split(scores: &[f64], fractions: &[f64]) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no segment fractions".into()));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "segment fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let (order, _) = ranking(scores);
    // `order` is most-unstable first; segments go most-stable first.
    let ascending: Vec<usize> = order.into_iter().rev().collect();
    let n = ascending.len();
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        let len = if i + 1 == fractions.len() {
            n - start
        } else {
            ((f * n as f64).round() as usize).min(n - start)
        };
        out.push(ascending[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}
