//! Synthetic dataset generation: stochastic block model graphs with
//! block-informative node features, for experiments and self-tests.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::RowMatrix;
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Stochastic block model: Bernoulli(p_within) inside a block,
/// Bernoulli(p_across) between blocks, unit weights. Returns the graph and
/// the block label per node. Connectivity is not guaranteed; callers either
/// pick seeds that connect or take the largest component.
pub fn sbm(
    block_sizes: &[usize],
    p_within: f64,
    p_across: f64,
    seed: u64,
) -> Result<(SparseGraph, Vec<usize>)> {
    if block_sizes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    for &p in &[p_within, p_across] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
    }
    let n: usize = block_sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (b, &size) in block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(b).take(size));
    }
    let mut rng = stream_rng(seed, "sbm");
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                p_within
            } else {
            p_across
            };
            if rng.random::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    Ok((SparseGraph::new(n, edges)?, labels))
}

/// Degree-corrected stochastic block model: pair (u, v) connects with
/// probability clamp(p * theta_u * theta_v), where the node propensities
/// theta spread over [theta_min, theta_max]. Gives the degree heterogeneity
/// real graphs have; plain [`sbm`] is the theta = 1 special case.
pub fn dcsbm(
    block_sizes: &[usize],
    p_within: f64,
    p_across: f64,
    theta_min: f64,
    theta_max: f64,
    seed: u64,
) -> Result<(SparseGraph, Vec<usize>)> {
    if block_sizes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if !(theta_min > 0.0 && theta_max >= theta_min) {
        return Err(Error::InvalidArgument(format!(
            "bad propensity range [{theta_min}, {theta_max}]"
        )));
    }
    let n: usize = block_sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (b, &size) in block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(b).take(size));
    }
    let mut rng = stream_rng(seed, "dcsbm");
    let theta: Vec<f64> = (0..n)
        .map(|_| theta_min + (theta_max - theta_min) * rng.random::<f64>())
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let base = if labels[u] == labels[v] {
                p_within
            } else {
                p_across
            };
            let p = (base * theta[u] * theta[v]).min(1.0);
            if rng.random::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    Ok((SparseGraph::new(n, edges)?, labels))
}

/// Block-informative Gaussian features: each node gets `signal` added on the
/// coordinate of its label (mod d) plus N(0, noise^2) on every coordinate.
pub fn block_features(
    labels: &[usize],
    d: usize,
    signal: f64,
    noise: f64,
    seed: u64,
) -> Result<RowMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("feature dimension must be > 0".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = stream_rng(seed, "features");
    let mut x = RowMatrix::zeros(labels.len(), d);
    for (i, &label) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        for value in row.iter_mut() {
            *value = noise * normal.sample(&mut rng);
        }
        row[label % d] += signal;
    }
    Ok(x)
}
