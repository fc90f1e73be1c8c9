//! Iterative eigensolvers for Laplacians and Laplacian pencils.
//!
//! Everything here works on the orthogonal complement of the all-ones
//! vector: the Laplacian nullspace of a connected graph is known
//! analytically, so every iterate is explicitly deflated instead of playing
//! shift games.
//!
//! - [`smallest_eigenpairs`]: Lanczos with full reorthogonalization for the
//!   k smallest nonzero Laplacian eigenpairs.
//! - [`generalized_eigenpairs`]: Lanczos in the L_Y inner product on the
//!   operator b -> L_Y^+ (L_X b) for the top eigenpairs of the pencil
//!   (L_X, L_Y); the pseudoinverse is never formed, each application is a
//!   conjugate-gradient solve.
//! - [`laplacian_solve`]: preconditioned CG on the rank-one completed
//!   operator L + (gamma/n) * ones * ones^T, which is SPD and agrees with
//!   L^+ b for right-hand sides orthogonal to ones.
//! - [`dense_pseudoinverse`]: capped dense oracle.

use crate::dense;
use crate::error::{Error, Result};
use crate::graph::{project_off_ones, Laplacian};
use crate::rng::stream_rng;
use rand::Rng;

/// Default residual tolerance for the iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Default dense-oracle size cap.
pub const DEFAULT_ORACLE_CAP: usize = 2000;

/// The k smallest nonzero Laplacian eigenpairs. Values ascend and are
/// strictly positive; vectors are unit-norm, pairwise orthonormal, and
/// orthogonal to the all-ones vector.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    n: usize,
    pub values: Vec<f64>,
    vectors: Vec<f64>, // column-major n x k
}

impl EigenPairs {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Top eigenpairs of the pencil L_X v = zeta L_Y v, i.e. of L_Y^+ L_X
/// restricted off the shared nullspace. Values descend and are strictly
/// positive; vectors are unit-norm and orthogonal to the all-ones vector.
#[derive(Debug, Clone)]
pub struct GeneralizedSpectrum {
    n: usize,
    pub values: Vec<f64>,
    vectors: Vec<f64>, // column-major n x s
}

impl GeneralizedSpectrum {
    pub fn s(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    /// Assemble a spectrum from raw parts (column-major n x s vector slab).
    pub fn from_parts(n: usize, values: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != n * values.len() {
            return Err(Error::DimensionMismatch {
                expected: n * values.len(),
                got: vectors.len(),
            });
        }
        Ok(GeneralizedSpectrum { n, values, vectors })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Flip sign so the first component with meaningful magnitude is positive.
fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    let thresh = scale * 1e-9;
    if let Some(first) = v.iter().find(|x| x.abs() > thresh) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn require_connected(l: &Laplacian) -> Result<()> {
    let comps = l.component_count();
    if comps != 1 {
        return Err(Error::DisconnectedGraph { components: comps });
    }
    Ok(())
}

/// Solve L x = b on a connected graph for b orthogonal to the all-ones
/// vector, returning the minimum-norm solution (x orthogonal to ones).
///
/// Preconditioned conjugate gradients on L + (gamma/n) * J, where J is the
/// all-ones matrix and gamma the mean degree. That operator is SPD and its
/// action costs one sparse matvec plus a mean; for b in the range of L the
/// solution coincides with L^+ b.
pub fn laplacian_solve(l: &Laplacian, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    require_connected(l)?;
    let n = l.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut rhs = b.to_vec();
    project_off_ones(&mut rhs);
    let b_norm = norm(&rhs);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let gamma = l.degrees().iter().sum::<f64>() / n as f64;
    let shift = gamma / n as f64;
    let apply = |x: &[f64], y: &mut [f64]| {
        l.matvec(x, y);
        let mean = x.iter().sum::<f64>() / n as f64;
        for v in y.iter_mut() {
            *v += gamma * mean;
        }
    };
    // Jacobi preconditioner over the completed diagonal.
    let precond: Vec<f64> = l
        .degrees()
        .iter()
        .map(|&d| 1.0 / (d + shift).max(1e-300))
        .collect();

    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, pi)| ri * pi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 40 * n + 200;
    for iter in 0..max_iter {
        if norm(&r) <= tol * b_norm {
            project_off_ones(&mut x);
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Operator is SPD; nonpositive curvature means roundoff has won.
            return Err(Error::NotConverged {
                context: "laplacian_solve (curvature loss)",
                residual: norm(&r) / b_norm,
                iterations: iter,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z.iter_mut()
            .zip(r.iter().zip(&precond))
            .for_each(|(zi, (ri, pi))| *zi = ri * pi);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= tol * b_norm {
        project_off_ones(&mut x);
        return Ok(x);
    }
    Err(Error::NotConverged {
        context: "laplacian_solve",
        residual: norm(&r) / b_norm,
        iterations: max_iter,
    })
}

/// Dense pseudoinverse oracle (row-major slab), capped at `cap` nodes.
pub fn dense_pseudoinverse(l: &Laplacian, cap: usize) -> Result<Vec<f64>> {
    let n = l.n();
    if n > cap {
        return Err(Error::OracleCapExceeded { n, cap });
    }
    Ok(dense::sym_pseudoinverse(&l.to_dense(), n, 1e-12))
}

// Shared Lanczos state: a growing orthonormal basis (in the relevant inner
// product) with tridiagonal coefficients. Zero betas mark restart points.
struct LanczosState {
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>, // beta[j] couples basis[j] and basis[j+1]
}

impl LanczosState {
    fn new() -> Self {
        LanczosState {
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.alpha.len()
    }
}

/// Compute the k smallest nonzero Laplacian eigenpairs of a connected graph.
///
/// Lanczos with full reorthogonalization and explicit deflation of the
/// constant vector. On basis collapse (an exhausted invariant subspace,
/// e.g. high eigenvalue multiplicity) the iteration restarts with a fresh
/// random direction, so multiple copies of a degenerate eigenvalue are
/// still found. Deterministic for a fixed seed.
pub fn smallest_eigenpairs(l: &Laplacian, k: usize, tol: f64, seed: u64) -> Result<EigenPairs> {
    require_connected(l)?;
    let n = l.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 <= k < n (k = {k}, n = {n})"
        )));
    }
    let max_dim = n - 1; // dimension of the deflated space
    // Small k still needs a deep Krylov space for the slow low end of the
    // spectrum; never budget below one full sweep of the deflated space.
    let budget = (50 * k).max(max_dim + 1).max(64);
    let mut rng = stream_rng(seed, "eigensolver");
    let mut state = LanczosState::new();
    let mut next = fresh_direction(n, &mut rng, &state.basis, euclid_reorth)?;

    let mut m_target = (2 * k + 20).min(max_dim).max(k.min(max_dim));
    let mut applications = 0usize;
    loop {
        // Extend the factorization up to m_target vectors.
        while state.len() < m_target && applications < budget {
            let v = next.clone();
            state.basis.push(v);
            let j = state.basis.len() - 1;
            let mut w = l.apply(&state.basis[j]);
            applications += 1;
            project_off_ones(&mut w);
            let a = dot(&w, &state.basis[j]);
            state.alpha.push(a);
            axpy(-a, &state.basis[j], &mut w);
            if j > 0 && state.beta[j - 1] != 0.0 {
                let b_prev = state.beta[j - 1];
                axpy(-b_prev, &state.basis[j - 1], &mut w);
            }
            euclid_reorth(&state.basis, &mut w);
            euclid_reorth(&state.basis, &mut w);
            let b = norm(&w);
            if state.len() >= max_dim {
                break;
            }
            if b < 1e-12 {
                // Invariant subspace exhausted: restart from a random
                // direction orthogonal to everything found so far.
                state.beta.push(0.0);
                next = fresh_direction(n, &mut rng, &state.basis, euclid_reorth)?;
            } else {
                state.beta.push(b);
                for x in w.iter_mut() {
                    *x /= b;
                }
                next = w;
            }
        }

        let m = state.len();
        let trid = dense::sym_tridiag_eigen(&state.alpha, &state.beta[..m.saturating_sub(1)]);
        // Ritz pairs, ascending; keep the k smallest that pass the residual
        // test. Near-zero Ritz values cannot occur (the constant vector is
        // deflated) but are skipped defensively.
        let mut values = Vec::with_capacity(k);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut all_converged = true;
        for j in 0..m {
            if values.len() == k {
                break;
            }
            let theta = trid.values[j];
            if theta <= 1e-12 {
                continue;
            }
            let y = trid.vector(j);
            let mut u = vec![0.0; n];
            for (i, basis_vec) in state.basis.iter().enumerate() {
                axpy(y[i], basis_vec, &mut u);
            }
            project_off_ones(&mut u);
            let u_norm = norm(&u);
            if u_norm < 1e-12 {
                continue;
            }
            for x in u.iter_mut() {
                *x /= u_norm;
            }
            let mut resid = l.apply(&u);
            axpy(-theta, &u, &mut resid);
            if norm(&resid) <= tol * theta.max(1.0) {
                fix_sign(&mut u);
                values.push(theta);
                vectors.push(u);
            } else {
                all_converged = false;
                break;
            }
        }
        if values.len() == k && all_converged {
            let mut flat = Vec::with_capacity(n * k);
            for v in &vectors {
                flat.extend_from_slice(v);
            }
            return Ok(EigenPairs {
                n,
                values,
                vectors: flat,
            });
        }
        if m >= max_dim || applications >= budget {
            return Err(Error::NotConverged {
                context: "smallest_eigenpairs",
                residual: tol,
                iterations: applications,
            });
        }
        m_target = (m + (k / 2).max(16)).min(max_dim);
    }
}

fn euclid_reorth(basis: &[Vec<f64>], w: &mut [f64]) {
    for v in basis {
        let proj = dot(w, v);
        axpy(-proj, v, w);
    }
    project_off_ones(w);
}

fn fresh_direction(
    n: usize,
    rng: &mut impl Rng,
    basis: &[Vec<f64>],
    reorth: impl Fn(&[Vec<f64>], &mut [f64]),
) -> Result<Vec<f64>> {
    for _ in 0..32 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        project_off_ones(&mut v);
        reorth(basis, &mut v);
        reorth(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            for x in v.iter_mut() {
                *x /= nv;
            }
            return Ok(v);
        }
    }
    Err(Error::NotConverged {
        context: "lanczos restart (no independent direction)",
        residual: 0.0,
        iterations: 0,
    })
}

/// Top-s eigenpairs of the pencil L_X v = zeta L_Y v on a shared connected
/// node set.
///
/// Lanczos in the L_Y inner product applied to b -> L_Y^+ (L_X b); each
/// operator application is one conjugate-gradient solve. Eigenvectors are
/// returned Euclidean-normalized with the usual sign convention, so
/// V_s^T V_s stays diagonal with the eigenvalues on the diagonal and node
/// scores scale inversely with a global output-weight rescaling.
pub fn generalized_eigenpairs(
    l_x: &Laplacian,
    l_y: &Laplacian,
    s: usize,
    tol: f64,
    seed: u64,
) -> Result<GeneralizedSpectrum> {
    let n = l_x.n();
    if l_y.n() != n {
        return Err(Error::NodeSetMismatch {
            left: n,
            right: l_y.n(),
        });
    }
    require_connected(l_x)?;
    require_connected(l_y)?;
    if s == 0 || s > n - 1 {
        return Err(Error::InvalidArgument(format!(
            "s must satisfy 1 <= s <= n - 1 (s = {s}, n = {n})"
        )));
    }
    let max_dim = n - 1;
    let inner_tol = (tol * 1e-2).clamp(1e-14, 1e-10);
    let budget = (50 * s).min(4 * max_dim).max(64);

    // B-inner product machinery (B = L_Y, PD on the deflated space).
    let b_apply = |x: &[f64]| l_y.apply(x);
    let b_inner = |x: &[f64], by: &[f64]| dot(x, by);
    let operator = |x: &[f64]| -> Result<Vec<f64>> {
        let mut fx = l_x.apply(x);
        project_off_ones(&mut fx);
        let mut y = laplacian_solve(l_y, &fx, inner_tol)?;
        project_off_ones(&mut y);
        Ok(y)
    };
    let b_reorth = |basis: &[Vec<f64>], cache: &[Vec<f64>], w: &mut [f64]| {
        for (v, bv) in basis.iter().zip(cache) {
            let proj = b_inner(w, bv);
            axpy(-proj, v, w);
        }
        project_off_ones(w);
    };

    let mut rng = stream_rng(seed, "pencil");
    let mut state = LanczosState::new();
    let mut b_cache: Vec<Vec<f64>> = Vec::new(); // L_Y * basis[j]

    let b_normalize = |v: &mut Vec<f64>, bv: &mut Vec<f64>| -> f64 {
        let nb = b_inner(v, bv).max(0.0).sqrt();
        if nb > 0.0 {
            for x in v.iter_mut() {
                *x /= nb;
            }
            for x in bv.iter_mut() {
                *x /= nb;
            }
        }
        nb
    };

    let fresh_b_direction = |rng: &mut rand_chacha::ChaCha8Rng,
                             basis: &[Vec<f64>],
                             cache: &[Vec<f64>]|
     -> Result<(Vec<f64>, Vec<f64>)> {
        for _ in 0..32 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            project_off_ones(&mut v);
            b_reorth(basis, cache, &mut v);
            b_reorth(basis, cache, &mut v);
            let mut bv = b_apply(&v);
            let nb = b_inner(&v, &bv).max(0.0).sqrt();
            if nb > 1e-8 {
                for x in v.iter_mut() {
                    *x /= nb;
                }
                for x in bv.iter_mut() {
                    *x /= nb;
                }
                return Ok((v, bv));
            }
        }
        Err(Error::NotConverged {
            context: "pencil lanczos restart (no independent direction)",
            residual: 0.0,
            iterations: 0,
        })
    };

    let (mut next_v, mut next_bv) = fresh_b_direction(&mut rng, &state.basis, &b_cache)?;
    let mut m_target = (2 * s + 10).min(max_dim).max(s.min(max_dim));
    let mut applications = 0usize;
    loop {
        while state.len() < m_target && applications < budget {
            state.basis.push(next_v.clone());
            b_cache.push(next_bv.clone());
            let j = state.basis.len() - 1;
            let mut w = operator(&state.basis[j])?;
            applications += 1;
            // alpha_j = <A v_j, v_j>_B = v_j^T L_X v_j.
            let a = dot(&w, &b_cache[j]);
            state.alpha.push(a);
            axpy(-a, &state.basis[j], &mut w);
            if j > 0 && state.beta[j - 1] != 0.0 {
                let b_prev = state.beta[j - 1];
                axpy(-b_prev, &state.basis[j - 1], &mut w);
            }
            b_reorth(&state.basis, &b_cache, &mut w);
            b_reorth(&state.basis, &b_cache, &mut w);
            let mut bw = b_apply(&w);
            if state.len() >= max_dim {
                break;
            }
            let nb = b_inner(&w, &bw).max(0.0).sqrt();
            if nb < 1e-10 {
                state.beta.push(0.0);
                let (v, bv) = fresh_b_direction(&mut rng, &state.basis, &b_cache)?;
                next_v = v;
                next_bv = bv;
            } else {
                state.beta.push(nb);
                let mut w = w;
                b_normalize(&mut w, &mut bw);
                next_v = w;
                next_bv = bw;
            }
        }

        let m = state.len();
        let trid = dense::sym_tridiag_eigen(&state.alpha, &state.beta[..m.saturating_sub(1)]);
        // Ritz pairs, descending this time.
        let mut values = Vec::with_capacity(s);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut all_converged = true;
        for j in (0..m).rev() {
            if values.len() == s {
                break;
            }
            let theta = trid.values[j];
            if theta <= 1e-14 {
                continue;
            }
            let y = trid.vector(j);
            let mut v = vec![0.0; n];
            for (i, basis_vec) in state.basis.iter().enumerate() {
                axpy(y[i], basis_vec, &mut v);
            }
            project_off_ones(&mut v);
            let v_norm = norm(&v);
            if v_norm < 1e-12 {
                continue;
            }
            for x in v.iter_mut() {
                *x /= v_norm;
            }
            let lxv = l_x.apply(&v);
            let lyv = l_y.apply(&v);
            let mut resid: Vec<f64> = lxv.iter().zip(&lyv).map(|(a, b)| a - theta * b).collect();
            project_off_ones(&mut resid);
            // Relative residual: badly scaled pencils (kNN weights span many
            // orders of magnitude) make an absolute criterion unreachable in
            // f64.
            let scale = (norm(&lxv) + theta * norm(&lyv)).max(theta.max(1.0));
            if norm(&resid) <= tol * scale {
                fix_sign(&mut v);
                values.push(theta);
                vectors.push(v);
            } else {
                all_converged = false;
                break;
            }
        }
        if values.len() == s && all_converged {
            let mut flat = Vec::with_capacity(n * s);
            for v in &vectors {
                flat.extend_from_slice(v);
            }
            return Ok(GeneralizedSpectrum {
                n,
                values,
                vectors: flat,
            });
        }
        if m >= max_dim || applications >= budget {
            return Err(Error::NotConverged {
                context: "generalized_eigenpairs",
                residual: tol,
                iterations: applications,
            });
        }
        m_target = (m + (s / 2).max(10)).min(max_dim);
    }
}
