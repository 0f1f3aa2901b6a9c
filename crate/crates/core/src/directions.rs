//! Search directions computed from one sketched system `(WᵀA, WᵀB)`.
//!
//! All directions accept an `n×r` iterate so several right-hand sides can share
//! one sketch.

use crate::error::{arg, dim, Result};
use crate::linalg::{cholesky, cholesky_solve, pseudo_solve, symmetric_eigenvalues};
use crate::matrix::{dot, DenseMatrix};

/// Matrices up to this order get an exact eigensolve in [`lambda_max`].
pub const EXACT_EIGEN_MAX_N: usize = 64;
pub const LAMBDA_MAX_TOL: f64 = 1e-6;
pub const LAMBDA_MAX_ITERS: usize = 500;

/// Parameters of the quasi-Newton inverse-Hessian chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnParams {
    /// Regularization `λ₁ > 0` of the accumulated sample Hessians.
    pub lambda1: f64,
    /// Shift `λ₂ ≥ 0` added to the applied matrix.
    pub lambda2: f64,
    /// Eigenvalue cap `B`; `f64::INFINITY` disables the check.
    pub cap: f64,
}

impl QnParams {
    pub fn new(lambda1: f64, lambda2: f64, cap: f64) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            cap,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) || !self.lambda1.is_finite() {
            return Err(arg(format!("lambda1 = {} must be positive", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return Err(arg(format!("lambda2 = {} must be nonnegative", self.lambda2)));
        }
        if !(self.cap > self.lambda2) {
            return Err(arg(format!(
                "cap = {} must exceed lambda2 = {}",
                self.cap, self.lambda2
            )));
        }
        Ok(())
    }
}

impl Default for QnParams {
    fn default() -> Self {
        Self {
            lambda1: 1e-5,
            lambda2: 0.0,
            cap: f64::INFINITY,
        }
    }
}

/// How the search direction is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionStrategy {
    Gradient,
    /// Pseudoinverse of the sketched matrix; `svd_tol = 0` uses the default cut.
    Newton { svd_tol: f64 },
    QuasiNewton(QnParams),
}

impl DirectionStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            DirectionStrategy::Gradient => Ok(()),
            DirectionStrategy::Newton { svd_tol } => {
                if *svd_tol >= 0.0 {
                    Ok(())
                } else {
                    Err(arg("svd_tol must be nonnegative"))
                }
            }
            DirectionStrategy::QuasiNewton(p) => p.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DirectionStrategy::Gradient => "gradient",
            DirectionStrategy::Newton { .. } => "newton",
            DirectionStrategy::QuasiNewton(_) => "quasinewton",
        }
    }
}

fn check_shapes(wa: &DenseMatrix, wb: &DenseMatrix, x: &DenseMatrix) -> Result<()> {
    if wb.rows() != wa.rows() || x.rows() != wa.cols() || x.cols() != wb.cols() {
        return Err(dim(format!(
            "WᵀA is {}x{}, WᵀB is {}x{}, x is {}x{}",
            wa.rows(),
            wa.cols(),
            wb.rows(),
            wb.cols(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

/// Sketched residual `WᵀA x − WᵀB`.
fn sketched_residual(wa: &DenseMatrix, wb: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    let mut r = wa.mul_unchecked(x);
    r.axpy(-1.0, wb);
    r
}

/// `−(WᵀA)ᵀ(WᵀA x − WᵀB)`, the negative sample gradient.
pub fn gradient_dir(wa: &DenseMatrix, wb: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_shapes(wa, wb, x)?;
    let mut g = wa.t_mul_unchecked(&sketched_residual(wa, wb, x));
    g.scale_mut(-1.0);
    Ok(g)
}

/// `−(WᵀA)†(WᵀA x − WᵀB)`.
pub fn newton_dir(
    wa: &DenseMatrix,
    wb: &DenseMatrix,
    x: &DenseMatrix,
    svd_tol: f64,
) -> Result<DenseMatrix> {
    check_shapes(wa, wb, x)?;
    let mut s = pseudo_solve(wa, svd_tol).mul_unchecked(&sketched_residual(wa, wb, x));
    s.scale_mut(-1.0);
    Ok(s)
}

/// The Newton direction before reduction: `−(AᵀWWᵀA)† AᵀWWᵀ(A x − B)`.
pub fn newton_dir_unreduced(
    wa: &DenseMatrix,
    wb: &DenseMatrix,
    x: &DenseMatrix,
    svd_tol: f64,
) -> Result<DenseMatrix> {
    check_shapes(wa, wb, x)?;
    let hessian = wa.t_mul_unchecked(wa);
    let grad = wa.t_mul_unchecked(&sketched_residual(wa, wb, x));
    let mut s = pseudo_solve(&hessian, svd_tol).mul_unchecked(&grad);
    s.scale_mut(-1.0);
    Ok(s)
}

/// Inverse-Hessian chain maintained by rank-`ℓ` Woodbury updates.
///
/// After `k ≥ 1` updates `inv_core = k (λ₁ I + Σᵢ AᵀWᵢWᵢᵀA)⁻¹`; the candidate
/// matrix is `inv_core + λ₂ I`. Before the first update `inv_core = I/λ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct QnState {
    params: QnParams,
    k: usize,
    inv_core: DenseMatrix,
    accepted: DenseMatrix,
    reject_count: usize,
    fallback_count: usize,
    eig_start: Option<Vec<f64>>,
}

/// What happened in one [`QnState::update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QnUpdate {
    /// The candidate passed the eigenvalue cap and is now applied.
    pub accepted: bool,
    /// The inner `ℓ×ℓ` system was not positive definite and was pseudo-solved.
    pub used_fallback: bool,
}

/// Starts the chain for `n` unknowns.
pub fn qn_init(n: usize, params: QnParams) -> Result<QnState> {
    params.validate()?;
    let initial = (1.0 / params.lambda1 + params.lambda2).min(params.cap);
    Ok(QnState {
        params,
        k: 0,
        inv_core: DenseMatrix::scaled_identity(n, 1.0 / params.lambda1),
        accepted: DenseMatrix::scaled_identity(n, initial),
        reject_count: 0,
        fallback_count: 0,
        eig_start: None,
    })
}

impl QnState {
    pub fn params(&self) -> &QnParams {
        &self.params
    }

    /// Number of sketches absorbed.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.inv_core.rows()
    }

    pub fn inv_core(&self) -> &DenseMatrix {
        &self.inv_core
    }

    /// The matrix currently applied to sample gradients.
    pub fn accepted(&self) -> &DenseMatrix {
        &self.accepted
    }

    /// The current candidate `inv_core + λ₂ I`.
    pub fn candidate(&self) -> DenseMatrix {
        let mut c = self.inv_core.clone();
        c.add_diagonal(self.params.lambda2);
        c
    }

    pub fn reject_count(&self) -> usize {
        self.reject_count
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback_count
    }

    /// Absorbs one sketched matrix `WᵀA` (`ℓ×n`).
    ///
    /// The chain always advances. The applied matrix is replaced only when the
    /// candidate's largest eigenvalue is within the cap.
    pub fn update(&mut self, wa: &DenseMatrix) -> Result<QnUpdate> {
        let n = self.n();
        if wa.cols() != n {
            return Err(dim(format!("WᵀA has {} columns, expected {n}", wa.cols())));
        }
        let ell = wa.rows();
        let k = self.k + 1;
        let used_fallback;
        if k == 1 {
            // (1/λ₁)(I − Aᵀw (λ₁I + WᵀAAᵀW)⁻¹ WᵀA)
            let l1 = self.params.lambda1;
            let mut inner = wa.mul_t_unchecked(wa);
            inner.add_diagonal(l1);
            let (solved, fb) = solve_inner(&inner, wa);
            used_fallback = fb;
            let t = wa.t_mul_unchecked(&solved);
            let mut next = DenseMatrix::identity(n);
            next.axpy(-1.0, &t);
            next.scale_mut(1.0 / l1);
            self.inv_core = next;
        } else {
            // (k/(k−1)) B (I − AᵀW ((k−1)I + WᵀA B AᵀW)⁻¹ WᵀA B)
            let prev = k as f64 - 1.0;
            let bu = self.inv_core.mul_t_unchecked(wa); // n×ℓ, B AᵀW
            let mut inner = wa.mul_unchecked(&bu); // ℓ×ℓ
            inner.add_diagonal(prev);
            inner.symmetrize();
            let but = bu.transpose();
            let (solved, fb) = solve_inner(&inner, &but);
            used_fallback = fb;
            let mut next = self.inv_core.clone();
            if ell > 0 {
                next.axpy(-1.0, &bu.mul_unchecked(&solved));
            }
            next.scale_mut(k as f64 / prev);
            self.inv_core = next;
        }
        self.inv_core.symmetrize();
        self.k = k;
        if used_fallback {
            self.fallback_count += 1;
        }

        let candidate = self.candidate();
        let accept = if self.params.cap.is_finite() {
            let lmax = if n <= EXACT_EIGEN_MAX_N {
                lambda_max(&candidate, LAMBDA_MAX_TOL, LAMBDA_MAX_ITERS)?
            } else {
                let (l, v) = power_lambda_max(
                    &candidate,
                    LAMBDA_MAX_TOL,
                    LAMBDA_MAX_ITERS,
                    self.eig_start.as_deref(),
                );
                self.eig_start = Some(v);
                l
            };
            lmax <= self.params.cap
        } else {
            true
        };
        if accept {
            self.accepted = candidate;
        } else {
            self.reject_count += 1;
        }
        Ok(QnUpdate {
            accepted: accept,
            used_fallback,
        })
    }
}

/// Solves the SPD inner system `S X = R`, falling back to the pseudoinverse
/// when Cholesky fails.
fn solve_inner(inner: &DenseMatrix, rhs: &DenseMatrix) -> (DenseMatrix, bool) {
    if inner.rows() == 0 {
        return (DenseMatrix::zeros(0, rhs.cols()), false);
    }
    match cholesky(inner) {
        Some(l) => (cholesky_solve(&l, rhs), false),
        None => (pseudo_solve(inner, 0.0).mul_unchecked(rhs), true),
    }
}

/// Advances the chain; see [`QnState::update`].
pub fn qn_update(mut state: QnState, wa: &DenseMatrix) -> Result<QnState> {
    state.update(wa)?;
    Ok(state)
}

/// `−B (WᵀA)ᵀ(WᵀA x − WᵀB)` with `B` the accepted matrix.
pub fn qn_dir(
    state: &QnState,
    wa: &DenseMatrix,
    wb: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shapes(wa, wb, x)?;
    if state.n() != wa.cols() {
        return Err(dim("quasi-Newton state has the wrong order"));
    }
    let g = wa.t_mul_unchecked(&sketched_residual(wa, wb, x));
    let mut s = state.accepted.mul_unchecked(&g);
    s.scale_mut(-1.0);
    Ok(s)
}

/// Largest eigenvalue of a symmetric matrix. Exact for order up to
/// [`EXACT_EIGEN_MAX_N`], power iteration from the normalized all-ones
/// vector otherwise (the dominant eigenvalue, which is `λ_max` for PSD input).
pub fn lambda_max(mat: &DenseMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !mat.is_square() {
        return Err(dim("lambda_max needs a square matrix"));
    }
    let scale = mat.max_abs().max(1.0);
    if mat.asymmetry() > 1e-8 * scale {
        return Err(arg("lambda_max needs a symmetric matrix"));
    }
    if mat.rows() == 0 {
        return Ok(0.0);
    }
    if mat.rows() <= EXACT_EIGEN_MAX_N {
        return Ok(*symmetric_eigenvalues(mat).last().unwrap());
    }
    Ok(power_lambda_max(mat, tol, max_iters, None).0)
}

/// Power iteration; returns the Rayleigh-quotient estimate and the final vector.
pub fn power_lambda_max(
    mat: &DenseMatrix,
    tol: f64,
    max_iters: usize,
    start: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let n = mat.rows();
    let mut v = match start {
        Some(s) if s.len() == n && s.iter().any(|x| *x != 0.0) => s.to_vec(),
        _ => vec![1.0; n],
    };
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..max_iters.max(1) {
        let w: Vec<f64> = (0..n).map(|i| dot(mat.row(i), &v)).collect();
        let next = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return (0.0, v);
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let converged = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    (lambda, v)
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
