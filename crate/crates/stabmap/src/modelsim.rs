//! Self-contained surrogate model, perturbation generators, and
//! clean-vs-perturbed evaluation metrics.
//!
//! The surrogate is a two-layer graph convolution with fixed random weights:
//! softmax(A_hat relu(A_hat X W1) W2) with A_hat the symmetrically
//! normalized self-looped adjacency. It is not trained; the stability
//! analysis is data-centric and only needs a deterministic graph-in/
//! vector-out mapping to exercise the full loop. Externally computed
//! outputs load through [`ModelOutputs::from_matrix`] instead.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::RowMatrix;
use crate::rng::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Lower clamp applied to output entries before KL divergence.
pub const OUTPUT_FLOOR: f64 = 1e-9;

/// Validated per-node probability rows: nonnegative, clamped to the floor,
/// renormalized to sum 1.
#[derive(Debug, Clone)]
pub struct ModelOutputs {
    y: RowMatrix,
}

impl ModelOutputs {
    /// Validate and normalize raw rows. Rejects negative entries and rows
    /// whose sum strays more than 1% from 1 before renormalization.
    pub fn from_matrix(raw: RowMatrix) -> Result<Self> {
        let mut y = raw;
        if y.n_cols() == 0 {
            return Err(Error::InvalidArgument("outputs need at least one class".into()));
        }
        for i in 0..y.n_rows() {
            let row = y.row_mut(i);
            let mut sum = 0.0;
            for v in row.iter() {
                if !v.is_finite() {
                    return Err(Error::BadMatrixEntry {
                        row: i,
                        reason: "non-finite output entry".into(),
                    });
                }
                if *v < 0.0 {
                    return Err(Error::BadMatrixEntry {
                        row: i,
                        reason: format!("negative output entry {v}"),
                    });
                }
                sum += *v;
            }
            if (sum - 1.0).abs() > 0.01 {
                return Err(Error::NotADistribution { row: i, sum });
            }
            let mut clamped_sum = 0.0;
            for v in row.iter_mut() {
                *v = v.max(OUTPUT_FLOOR);
                clamped_sum += *v;
            }
            for v in row.iter_mut() {
                *v /= clamped_sum;
            }
        }
        Ok(ModelOutputs { y })
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.y
    }

    pub fn n_nodes(&self) -> usize {
        self.y.n_rows()
    }

    pub fn n_classes(&self) -> usize {
        self.y.n_cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.y.row(i)
    }
}

/// Read externally computed model outputs (CSV or the SGMX binary format)
/// and validate them as per-node distributions.
pub fn load_outputs(path: impl AsRef<std::path::Path>) -> Result<ModelOutputs> {
    ModelOutputs::from_matrix(crate::io::read_matrix_auto(path)?)
}

/// Fixed random weights for the surrogate forward pass.
#[derive(Debug, Clone)]
pub struct SurrogateWeights {
    pub w1: RowMatrix,
    pub w2: RowMatrix,
}

impl SurrogateWeights {
    /// Gaussian weights scaled by 1/sqrt(fan-in), drawn from the
    /// "surrogate" stream of `seed`.
    pub fn random(d_in: usize, d_hidden: usize, n_classes: usize, seed: u64) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rng = stream_rng(seed, "surrogate");
        let mut fill = |rows: usize, cols: usize| -> RowMatrix {
            let scale = 1.0 / (rows as f64).sqrt();
            let mut m = RowMatrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = scale * normal.sample(&mut rng);
            }
            m
        };
        SurrogateWeights {
            w1: fill(d_in, d_hidden),
            w2: fill(d_hidden, n_classes),
        }
    }

    /// Scale the output layer, i.e. an inverse softmax temperature. Trained
    /// classifiers produce saturated rows; untrained random weights need
    /// this to reach comparable output contrast.
    pub fn with_logit_scale(mut self, scale: f64) -> Self {
        for v in self.w2.data_mut() {
            *v *= scale;
        }
        self
    }
}

// y = A_hat * x for row-major matrices, with A_hat the symmetrically
// normalized self-looped adjacency.
fn normalized_propagate(g: &SparseGraph, x: &RowMatrix) -> RowMatrix {
    let n = g.n_nodes();
    let d = x.n_cols();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / (1.0 + g.weighted_degree(u)).sqrt())
        .collect();
    let mut out = RowMatrix::zeros(n, d);
    for u in 0..n {
        let su = inv_sqrt[u];
        // Self-loop term.
        let mut acc: Vec<f64> = x.row(u).iter().map(|v| v * su * su).collect();
        for (v, w) in g.neighbors(u) {
            let coeff = w * su * inv_sqrt[v];
            for (a, xv) in acc.iter_mut().zip(x.row(v)) {
                *a += coeff * xv;
            }
        }
        out.row_mut(u).copy_from_slice(&acc);
    }
    out
}

fn softmax_rows(mut m: RowMatrix) -> RowMatrix {
    for i in 0..m.n_rows() {
        let row = m.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    m
}

/// Two-layer graph-convolution forward pass with fixed weights:
/// softmax(A_hat relu(A_hat X W1) W2).
pub fn surrogate_forward(
    g: &SparseGraph,
    x: &RowMatrix,
    weights: &SurrogateWeights,
) -> Result<ModelOutputs> {
    if x.n_rows() != g.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.n_nodes(),
            got: x.n_rows(),
        });
    }
    let mut hidden = normalized_propagate(g, x).matmul(&weights.w1)?;
    for v in hidden.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let logits = normalized_propagate(g, &hidden).matmul(&weights.w2)?;
    ModelOutputs::from_matrix(softmax_rows(logits))
}

/// X + level * eta with eta standard normal, drawn from the
/// "perturb-gaussian" stream.
pub fn perturb_gaussian(x: &RowMatrix, level: f64, seed: u64) -> RowMatrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = stream_rng(seed, "perturb-gaussian");
    let mut out = x.clone();
    if level == 0.0 {
        return out;
    }
    for v in out.data_mut() {
        *v += level * normal.sample(&mut rng);
    }
    out
}

/// One edge perturbation: cross-label additions plus same-label removals,
/// reusable against other graphs sharing the node set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiceDelta {
    /// Cross-label pairs to connect with unit weight.
    pub additions: Vec<(usize, usize)>,
    /// Same-label edges to delete.
    pub removals: Vec<(usize, usize)>,
    /// Removal candidates skipped because deleting them would have
    /// disconnected the graph.
    pub skipped_removals: usize,
}

/// Draw a delete-internal/connect-external edge perturbation: `n_pairs`
/// cross-label non-edges to add and `n_pairs` same-label edges to remove,
/// skipping removals that would disconnect the graph. Deterministic per
/// seed.
pub fn dice_delta(
    g: &SparseGraph,
    labels: &[usize],
    n_pairs: usize,
    seed: u64,
) -> Result<DiceDelta> {
    let n = g.n_nodes();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if n_pairs == 0 {
        return Ok(DiceDelta {
            additions: Vec::new(),
            removals: Vec::new(),
            skipped_removals: 0,
        });
    }

    // Additions: cross-label non-edges.
    let mut class_count = std::collections::BTreeMap::new();
    for &l in labels {
        *class_count.entry(l).or_insert(0usize) += 1;
    }
    let cross_pairs_total: usize = {
        let counts: Vec<usize> = class_count.values().copied().collect();
        let total: usize = counts.iter().sum();
        let mut cross = total * (total - 1) / 2;
        for c in &counts {
            cross -= c * (c - 1) / 2;
        }
        cross
    };
    let existing_cross = g
        .edges()
        .iter()
        .filter(|e| labels[e.u] != labels[e.v])
        .count();
    let addition_pool = cross_pairs_total - existing_cross;
    if n_pairs > addition_pool {
        return Err(Error::InfeasibleBudget {
            requested: n_pairs,
            available: addition_pool,
        });
    }
    let mut rng = stream_rng(seed, "dice-add");
    let mut additions = Vec::with_capacity(n_pairs);
    let mut chosen = std::collections::HashSet::new();
    if n_pairs * 4 >= addition_pool {
        // Tight pool: enumerate and shuffle.
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| labels[u] != labels[v] && !g.has_edge(u, v))
            .collect();
        pool.shuffle(&mut rng);
        additions.extend(pool.into_iter().take(n_pairs));
    } else {
        while additions.len() < n_pairs {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || labels[u] == labels[v] {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if g.has_edge(key.0, key.1) || !chosen.insert(key) {
                continue;
            }
            additions.push(key);
        }
    }
    additions.sort_unstable();

    // Removals: same-label edges whose deletion keeps the graph connected.
    let mut removal_pool: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|e| labels[e.u] == labels[e.v])
        .map(|e| (e.u, e.v))
        .collect();
    if n_pairs > removal_pool.len() {
        return Err(Error::InfeasibleBudget {
            requested: n_pairs,
            available: removal_pool.len(),
        });
    }
    let mut rng = stream_rng(seed, "dice-remove");
    removal_pool.shuffle(&mut rng);
    let base_components = g.connected_components().len();
    let mut working: std::collections::BTreeMap<(usize, usize), f64> = g
        .edges()
        .iter()
        .map(|e| ((e.u, e.v), e.w))
        .collect();
    let mut removals = Vec::with_capacity(n_pairs);
    let mut skipped = 0usize;
    for cand in removal_pool {
        if removals.len() == n_pairs {
            break;
        }
        let w = working.remove(&cand).expect("candidate still present");
        let trial = SparseGraph::new(n, working.iter().map(|(&(u, v), &w)| (u, v, w)))?;
        if trial.connected_components().len() > base_components {
            working.insert(cand, w);
            skipped += 1;
        } else {
            removals.push(cand);
        }
    }
    Ok(DiceDelta {
        additions,
        removals,
        skipped_removals: skipped,
    })
}

/// Apply a delta to a graph on the same node set: removals delete the edge
/// when present; additions insert unit weight, merging with an existing
/// edge if one is there.
pub fn apply_dice(g: &SparseGraph, delta: &DiceDelta) -> Result<SparseGraph> {
    let n = g.n_nodes();
    let removed: std::collections::HashSet<(usize, usize)> =
        delta.removals.iter().copied().collect();
    let mut edges: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .filter(|e| !removed.contains(&(e.u, e.v)))
        .map(|e| (e.u, e.v, e.w))
        .collect();
    for &(u, v) in &delta.additions {
        if u >= n || v >= n {
            return Err(Error::NodeOutOfRange(u.max(v), n));
        }
        edges.push((u, v, 1.0));
    }
    SparseGraph::new(n, edges)
}

/// Convenience wrapper: draw a delta against `g` and apply it.
pub fn perturb_dice(
    g: &SparseGraph,
    labels: &[usize],
    n_pairs: usize,
    seed: u64,
) -> Result<(SparseGraph, DiceDelta)> {
    let delta = dice_delta(g, labels, n_pairs, seed)?;
    let perturbed = apply_dice(g, &delta)?;
    Ok((perturbed, delta))
}

/// Per-node comparison of clean vs perturbed outputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeEval {
    pub cosine: f64,
    pub kld: f64,
}

/// Cosine similarity and KL divergence D(clean || perturbed) per node over
/// `nodes` (all nodes when empty).
pub fn eval_pair(
    clean: &ModelOutputs,
    perturbed: &ModelOutputs,
    nodes: &[usize],
) -> Result<Vec<NodeEval>> {
    if clean.n_nodes() != perturbed.n_nodes() || clean.n_classes() != perturbed.n_classes() {
        return Err(Error::DimensionMismatch {
            expected: clean.n_nodes() * clean.n_classes(),
            got: perturbed.n_nodes() * perturbed.n_classes(),
        });
    }
    let all: Vec<usize>;
    let nodes = if nodes.is_empty() {
        all = (0..clean.n_nodes()).collect();
        &all
    } else {
        nodes
    };
    nodes
        .par_iter()
        .map(|&p| {
            if p >= clean.n_nodes() {
                return Err(Error::NodeOutOfRange(p, clean.n_nodes()));
            }
            let a = clean.row(p);
            let b = perturbed.row(p);
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let kld: f64 = a.iter().zip(b).map(|(x, y)| x * (x / y).ln()).sum();
            Ok(NodeEval {
                cosine: dot / (na * nb),
                kld,
            })
        })
        .collect()
}

/// One perturbation setting of the separation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PerturbKind {
    /// Gaussian feature noise at this level.
    Gaussian(f64),
    /// Edge perturbation with this many added and removed pairs.
    Dice(usize),
}

impl PerturbKind {
    pub fn level(&self) -> f64 {
        match self {
            PerturbKind::Gaussian(l) => *l,
            PerturbKind::Dice(p) => *p as f64,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PerturbKind::Gaussian(_) => "gaussian",
            PerturbKind::Dice(_) => "dice",
        }
    }
}

/// One aggregated row of the separation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationRow {
    pub segment: String,
    pub kind: String,
    pub level: f64,
    pub mean_cos: f64,
    pub mean_kld: f64,
    pub n: usize,
}

/// Re-run the surrogate under each perturbation level and aggregate
/// per-segment means of the evaluation metrics. Segments come from the
/// stability ranking on clean data; every level perturbs the same clean
/// inputs (levels are independent, not cumulative).
#[allow(clippy::too_many_arguments)]
pub fn separation_experiment(
    g: &SparseGraph,
    x: &RowMatrix,
    labels: &[usize],
    weights: &SurrogateWeights,
    clean: &ModelOutputs,
    segments: &[(String, Vec<usize>)],
    levels: &[PerturbKind],
    seed: u64,
) -> Result<Vec<SeparationRow>> {
    let mut rows = Vec::with_capacity(levels.len() * segments.len());
    for kind in levels {
        let perturbed = match kind {
            PerturbKind::Gaussian(level) => {
                let xp = perturb_gaussian(x, *level, seed);
                surrogate_forward(g, &xp, weights)?
            }
            PerturbKind::Dice(pairs) => {
                let (gp, _) = perturb_dice(g, labels, *pairs, seed)?;
                surrogate_forward(&gp, x, weights)?
            }
        };
        for (name, members) in segments {
            let evals = eval_pair(clean, &perturbed, members)?;
            let n = evals.len().max(1);
            let mean_cos = evals.iter().map(|e| e.cosine).sum::<f64>() / n as f64;
            let mean_kld = evals.iter().map(|e| e.kld).sum::<f64>() / n as f64;
            rows.push(SeparationRow {
                segment: name.clone(),
                kind: kind.kind_name().to_string(),
                level: kind.level(),
                mean_cos,
                mean_kld,
                n: evals.len(),
            });
        }
    }
    Ok(rows)
}
