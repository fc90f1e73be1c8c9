//! Weighted spectral embedding, approximate effective resistance, and
//! eigengap diagnostics.
//!
//! The embedding matrix has column i equal to u_i / sqrt(lambda_i) over the
//! k smallest nonzero Laplacian eigenpairs, so squared row distances
//! approximate effective resistance; the approximation error is exactly the
//! truncated spectral tail and vanishes at k = n - 1.

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::RowMatrix;
use crate::resistance::exact_resistance;
use crate::rng::stream_rng;
use crate::solver::{smallest_eigenpairs, EigenPairs};
use rand::Rng;

/// Weighted spectral embedding: row p of `u` is the k-dimensional embedding
/// of node p; `values` keeps the source eigenvalues.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    u: RowMatrix,
    pub values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn n_nodes(&self) -> usize {
        self.u.n_rows()
    }

    pub fn k(&self) -> usize {
        self.u.n_cols()
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.u
    }

    pub fn row(&self, p: usize) -> &[f64] {
        self.u.row(p)
    }

    /// The embedding truncated to its first `k` columns. Spectral
    /// embeddings nest, so this equals a fresh embedding at the smaller k.
    pub fn truncated(&self, k: usize) -> EmbeddingMatrix {
        let k = k.min(self.k());
        let n = self.n_nodes();
        let mut u = RowMatrix::zeros(n, k);
        for i in 0..n {
            u.row_mut(i).copy_from_slice(&self.u.row(i)[..k]);
        }
        EmbeddingMatrix {
            u,
            values: self.values[..k].to_vec(),
        }
    }

    /// Rebuild from raw parts (row-major n x k slab plus eigenvalues).
    pub fn from_parts(u: RowMatrix, values: Vec<f64>) -> Result<Self> {
        if u.n_cols() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: u.n_cols(),
                got: values.len(),
            });
        }
        Ok(EmbeddingMatrix { u, values })
    }
}

/// Eigengap diagnostics: consecutive-ratio proxy for the expansion-based
/// eigengap, plus the crude class-count heuristic k ~ 10c.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EigengapReport {
    /// The k_max + 1 smallest nonzero eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `ratios[i] = eigenvalues[i+1] / eigenvalues[i]`.
    pub ratios: Vec<f64>,
    /// 1-based index of the largest ratio; ties resolved to the smallest k.
    pub suggested_k: usize,
    /// 10 * n_classes when a class count was supplied.
    pub heuristic_k: Option<usize>,
}

/// Build the weighted spectral embedding from the k smallest nonzero
/// eigenpairs of a connected graph.
pub fn spectral_embed(g: &SparseGraph, k: usize, tol: f64, seed: u64) -> Result<EmbeddingMatrix> {
    let eig = smallest_eigenpairs(&g.laplacian(), k, tol, seed)?;
    Ok(embedding_from_pairs(&eig))
}

/// Assemble U_k = [u_1/sqrt(l_1), ..., u_k/sqrt(l_k)] from already-computed
/// eigenpairs.
pub fn embedding_from_pairs(eig: &EigenPairs) -> EmbeddingMatrix {
    let n = eig.n();
    let k = eig.k();
    let mut u = RowMatrix::zeros(n, k);
    for j in 0..k {
        let scale = 1.0 / eig.values[j].sqrt();
        let col = eig.vector(j);
        for i in 0..n {
            u.set(i, j, col[i] * scale);
        }
    }
    EmbeddingMatrix {
        u,
        values: eig.values.clone(),
    }
}

/// Approximate effective resistance between p and q: the squared embedding
/// distance || U_k^T (e_p - e_q) ||^2.
pub fn approx_resistance(u: &EmbeddingMatrix, p: usize, q: usize) -> Result<f64> {
    let n = u.n_nodes();
    if p >= n {
        return Err(Error::NodeOutOfRange(p, n));
    }
    if q >= n {
        return Err(Error::NodeOutOfRange(q, n));
    }
    if p == q {
        return Err(Error::InvalidArgument(
            "approx_resistance requires distinct nodes".into(),
        ));
    }
    Ok(u.matrix().row_dist2(p, q))
}

/// Pearson correlation coefficient. Returns 0 when either side has zero
/// variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n == 0 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample distinct node pairs uniformly, without replacement.
pub(crate) fn sample_pairs(n: usize, n_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = stream_rng(seed, "resistance-pairs");
    let total = n * (n - 1) / 2;
    let wanted = n_pairs.min(total);
    let mut seen = std::collections::HashSet::with_capacity(wanted * 2);
    let mut pairs = Vec::with_capacity(wanted);
    while pairs.len() < wanted {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            pairs.push(key);
        }
    }
    pairs
}

/// Pearson correlation between exact effective resistance (conjugate-
/// gradient solves on the full Laplacian) and the embedding approximation,
/// over uniformly random distinct pairs sampled without replacement.
pub fn resistance_correlation(
    g: &SparseGraph,
    u: &EmbeddingMatrix,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if g.n_nodes() != u.n_nodes() {
        return Err(Error::NodeSetMismatch {
            left: g.n_nodes(),
            right: u.n_nodes(),
        });
    }
    let pairs = sample_pairs(g.n_nodes(), n_pairs, seed);
    let mut exact = Vec::with_capacity(pairs.len());
    let mut approx = Vec::with_capacity(pairs.len());
    for &(p, q) in &pairs {
        exact.push(exact_resistance(g, p, q, 1e-10)?);
        approx.push(approx_resistance(u, p, q)?);
    }
    Ok(pearson(&exact, &approx))
}

/// Eigengap report over the first k_max nonzero eigenvalues (k_max + 1 are
/// computed so every ratio is available). The exact k-way expansion constant
/// is not computed; the consecutive-eigenvalue ratio stands in for it.
pub fn eigengap_report(
    g: &SparseGraph,
    k_max: usize,
    n_classes: Option<usize>,
    tol: f64,
    seed: u64,
) -> Result<EigengapReport> {
    let n = g.n_nodes();
    if k_max + 1 >= n {
        return Err(Error::InvalidArgument(format!(
            "k_max must satisfy k_max + 2 <= n (k_max = {k_max}, n = {n})"
        )));
    }
    let eig = smallest_eigenpairs(&g.laplacian(), k_max + 1, tol, seed)?;
    let eigenvalues = eig.values.clone();
    let ratios: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] / w[0]).collect();
    let mut suggested_k = 1usize;
    let mut best = f64::NEG_INFINITY;
    for (i, &r) in ratios.iter().enumerate() {
        if r > best + 1e-12 {
            best = r;
            suggested_k = i + 1;
        }
    }
    Ok(EigengapReport {
        eigenvalues,
        ratios,
        suggested_k,
        heuristic_k: n_classes.map(|c| 10 * c),
    })
}

/// Concatenate [U_k, X] after scaling each block to Frobenius norm sqrt(n),
/// so neither block dominates kNN distances regardless of raw units. A zero
/// or empty block passes through unscaled.
pub fn augment_features(u: &EmbeddingMatrix, x: &RowMatrix) -> Result<RowMatrix> {
    if x.n_rows() != 0 && x.n_rows() != u.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: u.n_nodes(),
            got: x.n_rows(),
        });
    }
    if !x.is_finite() {
        return Err(Error::BadMatrixEntry {
            row: 0,
            reason: "non-finite feature entry".into(),
        });
    }
    let n = u.n_nodes();
    let target = (n as f64).sqrt();
    let scale_block = |m: &RowMatrix| -> RowMatrix {
        let f = m.frobenius_norm();
        let mut out = m.clone();
        if f > 0.0 {
            let s = target / f;
            for v in out.data_mut() {
                *v *= s;
            }
        }
        out
    };
    let left = scale_block(u.matrix());
    if x.n_cols() == 0 || x.n_rows() == 0 {
        return Ok(left);
    }
    let right = scale_block(x);
    left.hconcat(&right)
}
