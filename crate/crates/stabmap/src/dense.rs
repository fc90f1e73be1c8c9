//! Dense symmetric eigendecomposition and pseudoinverse.
//!
//! Classic Householder tridiagonalization followed by implicit-shift QL
//! (the EISPACK tred2/tql2 pair). Deterministic and O(n^3); used as the
//! oracle behind the iterative solvers and for small-problem paths. Input
//! matrices are row-major `Vec<f64>` slabs.

/// Eigendecomposition of a symmetric matrix. `values` ascend; column `j` of
/// the (column-major) `vectors` slab is the unit eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub n: usize,
    pub values: Vec<f64>,
    vectors: Vec<f64>,
}

impl SymEigen {
    /// Eigenvector for `values[j]` as a contiguous slice.
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Full eigendecomposition of a symmetric n x n row-major matrix.
///
/// Symmetry is assumed, not checked; only the lower triangle would need to
/// agree for the reduction to be meaningful.
pub fn sym_eigen(a: &[f64], n: usize) -> SymEigen {
    assert_eq!(a.len(), n * n, "matrix slab must be n*n");
    if n == 0 {
        return SymEigen {
            n,
            values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e);
    // JAMA layout keeps eigenvectors in columns of the row-major `v`;
    // repack column-major so each eigenvector is contiguous.
    let mut vectors = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vectors[j * n + i] = v[i * n + j];
        }
    }
    SymEigen {
        n,
        values: d,
        vectors,
    }
}

/// Eigendecomposition of a symmetric tridiagonal matrix given its diagonal
/// and subdiagonal (`off.len() == diag.len() - 1`). Used on the Lanczos
/// projection.
pub fn sym_tridiag_eigen(diag: &[f64], off: &[f64]) -> SymEigen {
    let n = diag.len();
    assert!(n == 0 || off.len() == n - 1);
    if n == 0 {
        return SymEigen {
            n,
            values: Vec::new(),
            vectors: Vec::new(),
        };
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d = diag.to_vec();
    // tql2 expects e[1..] to hold the subdiagonal.
    let mut e = vec![0.0; n];
    e[1..].copy_from_slice(off);
    tql2(n, &mut v, &mut d, &mut e);
    let mut vectors = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vectors[j * n + i] = v[i * n + j];
        }
    }
    SymEigen {
        n,
        values: d,
        vectors,
    }
}

// Householder reduction to symmetric tridiagonal form (EISPACK tred2).
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n.saturating_sub(1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

// Symmetric tridiagonal QL with implicit shifts (EISPACK tql2), including
// eigenvalue/eigenvector sorting.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = 2.0f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Sort ascending, carrying eigenvectors along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in 0..n {
                v.swap(row * n + i, row * n + k);
            }
        }
    }
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix, built from its
/// eigendecomposition. Eigenvalues below `null_tol * max(|lambda|, 1)` are
/// treated as zero. Returns a row-major slab.
pub fn sym_pseudoinverse(a: &[f64], n: usize, null_tol: f64) -> Vec<f64> {
    let eig = sym_eigen(a, n);
    let scale = eig
        .values
        .iter()
        .fold(1.0f64, |acc, &l| acc.max(l.abs()));
    let mut pinv = vec![0.0; n * n];
    for j in 0..n {
        let lambda = eig.values[j];
        if lambda.abs() <= null_tol * scale {
            continue;
        }
        let u = eig.vector(j);
        let inv = 1.0 / lambda;
        for r in 0..n {
            let ur = u[r] * inv;
            for c in 0..n {
                pinv[r * n + c] += ur * u[c];
            }
        }
    }
    pinv
}

/// Effective resistance read off a dense pseudoinverse slab.
pub fn resistance_from_pinv(pinv: &[f64], n: usize, p: usize, q: usize) -> f64 {
    pinv[p * n + p] + pinv[q * n + q] - 2.0 * pinv[p * n + q]
}

/// y = A x for a row-major dense slab.
pub fn dense_matvec(a: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        y[i] = a[i * n..(i + 1) * n]
            .iter()
            .zip(x)
            .map(|(m, v)| m * v)
            .sum();
    }
}
