//! Tridiagonal kernels: a pivoted solver for real or complex systems and the
//! implicit QL eigensolver for symmetric tridiagonal matrices.

use num_complex::ComplexFloat;

use crate::error::{Error, Result};

/// Solve T x = rhs where T has sub-diagonal `lower` (length n-1), diagonal
/// `diag` (length n) and super-diagonal `upper` (length n-1).
///
/// Gaussian elimination with partial pivoting, as in LAPACK's `gtsv`; the
/// row swaps introduce a second super-diagonal.
pub fn solve_tridiagonal<T: ComplexFloat>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    if rhs.len() != n || (n > 0 && (lower.len() != n - 1 || upper.len() != n - 1)) {
        return Err(Error::Shape { expected: n, got: rhs.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let zero = T::zero();
    let mut d: Vec<T> = diag.to_vec();
    let mut du: Vec<T> = upper.to_vec();
    let mut du2: Vec<T> = vec![zero; n.saturating_sub(2)];
    let mut dl: Vec<T> = lower.to_vec();
    let mut b: Vec<T> = rhs.to_vec();

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            // no interchange
            if d[i] == zero {
                return Err(Error::Numeric(format!("singular tridiagonal system at row {i}")));
            }
            let m = dl[i] / d[i];
            d[i + 1] = d[i + 1] - m * du[i];
            b[i + 1] = b[i + 1] - m * b[i];
            if i + 2 < n {
                du2[i] = zero;
            }
            dl[i] = m;
        } else {
            // swap rows i and i+1
            let m = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - m * tmp;
            du[i] = tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -m * du[i + 1];
            }
            b.swap(i, i + 1);
            b[i + 1] = b[i + 1] - m * b[i];
            dl[i] = m;
        }
    }
    if d[n - 1] == zero {
        return Err(Error::Numeric(format!("singular tridiagonal system at row {}", n - 1)));
    }
    // back substitution with two super-diagonals
    b[n - 1] = b[n - 1] / d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite solution of tridiagonal system".into()));
    }
    Ok(b)
}

/// Eigenpairs of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Euclidean-orthonormal eigenvectors, `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Implicit QL iteration with Wilkinson shifts (the EISPACK `tql2` scheme)
/// on the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (length n-1).
pub fn symmetric_tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<TridiagonalEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagonalEigen { values: Vec::new(), vectors: Vec::new() });
    }
    if off.len() != n - 1 {
        return Err(Error::Shape { expected: n - 1, got: off.len() });
    }
    const MAX_SWEEPS: usize = 60;

    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // z is stored column-major: z[k*n + i] is component i of vector k
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            // look for a negligible off-diagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(Error::Numeric(format!(
                    "tridiagonal eigensolver: no convergence for eigenvalue {l} after {MAX_SWEEPS} sweeps (off-diagonal {:e})",
                    e[l]
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (zi, zi1) = {
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    (&mut lo[i * n..], &mut hi[..n])
                };
                for k in 0..n {
                    let f = zi1[k];
                    zi1[k] = s * zi[k] + c * f;
                    zi[k] = c * zi[k] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v = z[k * n..(k + 1) * n].to_vec();
            // fix the sign so the first significant component is positive
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-8) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    Ok(TridiagonalEigen { values, vectors })
}
