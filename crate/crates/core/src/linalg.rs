//! Small dense linear-algebra helpers not covered directly by nalgebra:
//! a row-major Cholesky tuned for the SDP Schur complement, plus eigenvalue
//! conveniences.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};

/// Lower-triangular Cholesky factor stored row-major (full `n*n` buffer).
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive definite row-major matrix. Only the lower
    /// triangle of `a` is read. Returns `None` on a nonpositive pivot.
    pub fn factor(a: &[f64], n: usize) -> Option<Cholesky> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (i * n, j * n);
                let s = a[ri + j] - dot(&l[ri..ri + j], &l[rj..rj + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[ri + i] = libm::sqrt(s);
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    /// Factors `a + delta*diag(a)`-style regularized copies with growing
    /// `delta` until the factorization succeeds. Returns the shift used.
    pub fn factor_regularized(a: &[f64], n: usize) -> Option<(Cholesky, f64)> {
        if let Some(c) = Cholesky::factor(a, n) {
            return Some((c, 0.0));
        }
        let scale = (0..n).fold(0.0f64, |m, i| m.max(libm::fabs(a[i * n + i]))).max(1e-300);
        let mut shift = 1e-13 * scale;
        let mut work = a.to_vec();
        for _ in 0..12 {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + shift;
            }
            if let Some(c) = Cholesky::factor(&work, n) {
                return Some((c, shift));
            }
            shift *= 100.0;
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let r = i * n;
            let s = x[i] - dot(&self.l[r..r + i], &x[..i]);
            x[i] = s / self.l[r + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorize.
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for k in 4 * chunks..n {
        s0 += a[k] * b[k];
    }
    (s0 + s1) + (s2 + s3)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => f64::INFINITY,
        1 => m[(0, 0)],
        _ => {
            let e = SymmetricEigen::new(m.clone());
            e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest real part among the eigenvalues of a general square matrix.
pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves the continuous Lyapunov equation `J^T P + P J = -Q` through its
/// Kronecker form. Intended for the small matrices of subsystem linearizations.
pub fn solve_lyapunov(j: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = j.nrows();
    let mut k = DMatrix::<f64>::zeros(n * n, n * n);
    // vec(P) column-major: index p(r,c) = c*n + r.
    // (J^T P)(r,c) = sum_s J(s,r) P(s,c); (P J)(r,c) = sum_s P(r,s) J(s,c).
    for r in 0..n {
        for c in 0..n {
            let row = c * n + r;
            for s in 0..n {
                k[(row, c * n + s)] += j[(s, r)];
                k[(row, s * n + r)] += j[(s, c)];
            }
        }
    }
    let rhs = DMatrix::from_iterator(n * n, 1, q.iter().map(|v| -v));
    let sol = k.lu().solve(&rhs)?;
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut p);
    Some(p)
}
