//! Reference dense solvers: Householder QR least squares, SVD pseudoinverse,
//! Cholesky for small SPD systems, and symmetric eigenvalues.

use crate::error::{dim, Error, Result};
use crate::matrix::DenseMatrix;

/// `|R_ii| <= RANK_RTOL * max_j |R_jj|` flags a rank-deficient column.
pub const RANK_RTOL: f64 = 1e-12;

/// Householder QR factorization of a tall matrix, stored compactly.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    /// Upper triangle holds R; reflector tails live below the diagonal.
    qr: DenseMatrix,
    /// Leading entry of each reflector vector.
    v_head: Vec<f64>,
    /// `2 / (vᵀv)` per reflector, zero when the reflector is the identity.
    tau: Vec<f64>,
    r_diag: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(dim(format!("QR needs rows >= cols, got {m}x{n}")));
        }
        let mut qr = a.clone();
        let mut v_head = vec![0.0; n];
        let mut tau = vec![0.0; n];
        let mut r_diag = vec![0.0; n];
        for k in 0..n {
            let norm = (k..m).map(|i| qr[(i, k)].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let x0 = qr[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let head = x0 - alpha;
            let vtv = head * head + ((k + 1)..m).map(|i| qr[(i, k)].powi(2)).sum::<f64>();
            let t = 2.0 / vtv;
            for j in (k + 1)..n {
                let mut s = head * qr[(k, j)];
                for i in (k + 1)..m {
                    s += qr[(i, k)] * qr[(i, j)];
                }
                let s = s * t;
                qr[(k, j)] -= s * head;
                for i in (k + 1)..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= s * vik;
                }
            }
            qr[(k, k)] = alpha;
            v_head[k] = head;
            tau[k] = t;
            r_diag[k] = alpha;
        }
        Ok(Self {
            qr,
            v_head,
            tau,
            r_diag,
        })
    }

    pub fn r_diagonal(&self) -> &[f64] {
        &self.r_diag
    }

    /// Checks the R diagonal against [`RANK_RTOL`].
    pub fn check_full_rank(&self) -> Result<()> {
        let max = self.r_diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (i, r) in self.r_diag.iter().enumerate() {
            if r.abs() <= RANK_RTOL * max || max == 0.0 {
                return Err(Error::Rank(format!(
                    "|R[{i},{i}]| = {:.3e} against max {:.3e}",
                    r.abs(),
                    max
                )));
            }
        }
        Ok(())
    }

    /// Applies `Qᵀ` to `b` in place.
    fn apply_qt(&self, b: &mut DenseMatrix) {
        let (m, n) = self.qr.shape();
        for k in 0..n {
            if self.tau[k] == 0.0 {
                continue;
            }
            for c in 0..b.cols() {
                let mut s = self.v_head[k] * b[(k, c)];
                for i in (k + 1)..m {
                    s += self.qr[(i, k)] * b[(i, c)];
                }
                let s = s * self.tau[k];
                b[(k, c)] -= s * self.v_head[k];
                for i in (k + 1)..m {
                    b[(i, c)] -= s * self.qr[(i, k)];
                }
            }
        }
    }

    /// Least-squares solution of `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let (m, n) = self.qr.shape();
        if b.rows() != m {
            return Err(dim(format!("rhs has {} rows, expected {m}", b.rows())));
        }
        self.check_full_rank()?;
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let r = b.cols();
        let mut x = DenseMatrix::zeros(n, r);
        for c in 0..r {
            for i in (0..n).rev() {
                let mut s = qtb[(i, c)];
                for j in (i + 1)..n {
                    s -= self.qr[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = s / self.qr[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Minimizer of `‖A x − b‖` per column of `b`, via Householder QR.
pub fn qr_solve(a: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    HouseholderQr::new(a)?.solve(rhs)
}

/// Moore–Penrose pseudoinverse by SVD. Singular values at or below `tol` are
/// treated as zero; `tol = 0` selects `max(rows, cols) · ε · σ_max`.
pub fn pseudo_solve(mat: &DenseMatrix, tol: f64) -> DenseMatrix {
    let (r, c) = mat.shape();
    if r == 0 || c == 0 {
        return DenseMatrix::zeros(c, r);
    }
    let svd = mat.to_nalgebra().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let cut = if tol > 0.0 {
        tol
    } else {
        r.max(c) as f64 * f64::EPSILON * sigma_max
    };
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let k = svd.singular_values.len();
    let mut out = DenseMatrix::zeros(c, r);
    for s in 0..k {
        let sv = svd.singular_values[s];
        if sv <= cut {
            continue;
        }
        let inv = 1.0 / sv;
        for i in 0..c {
            let vi = vt[(s, i)] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..r {
                out[(i, j)] += vi * u[(j, s)];
            }
        }
    }
    out
}

/// Lower Cholesky factor of an SPD matrix, or `None` if a pivot is not positive.
pub fn cholesky(mat: &DenseMatrix) -> Option<DenseMatrix> {
    let n = mat.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = mat[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = mat[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ X = B` given the lower Cholesky factor.
pub fn cholesky_solve(l: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(mat: &DenseMatrix) -> Vec<f64> {
    if mat.rows() == 0 {
        return Vec::new();
    }
    let eig = nalgebra::SymmetricEigen::new(mat.to_nalgebra());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}
