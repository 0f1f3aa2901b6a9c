//! Least-squares problems and their deterministic reference solutions.

use crate::error::{arg, dim, Result};
use crate::linalg::qr_solve;
use crate::matrix::DenseMatrix;
use crate::rng::{standard_normal, Seed};

/// Stream ids used by [`generate_regression`].
const STREAM_MATRIX: u64 = 0;
const STREAM_NOISE: u64 = 1;

/// An overdetermined problem `min ‖A X − B‖` with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LsProblem {
    a: DenseMatrix,
    rhs: DenseMatrix,
    x_true: Option<DenseMatrix>,
    sigma: Option<f64>,
}

impl LsProblem {
    pub fn new(a: DenseMatrix, rhs: DenseMatrix) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(dim(format!("need m >= n, got {m}x{n}")));
        }
        if rhs.rows() != m || rhs.cols() == 0 {
            return Err(dim(format!(
                "rhs is {}x{}, expected {m} rows and at least one column",
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self {
            a,
            rhs,
            x_true: None,
            sigma: None,
        })
    }

    pub fn with_truth(mut self, x_true: DenseMatrix, sigma: Option<f64>) -> Result<Self> {
        if x_true.shape() != (self.n(), self.r()) {
            return Err(dim(format!(
                "x_true is {}x{}, expected {}x{}",
                x_true.rows(),
                x_true.cols(),
                self.n(),
                self.r()
            )));
        }
        if let Some(s) = sigma {
            if !(s >= 0.0) {
                return Err(arg("sigma must be nonnegative"));
            }
        }
        self.x_true = Some(x_true);
        self.sigma = sigma;
        Ok(self)
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &DenseMatrix {
        &self.rhs
    }

    pub fn x_true(&self) -> Option<&DenseMatrix> {
        self.x_true.as_ref()
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Number of right-hand sides.
    pub fn r(&self) -> usize {
        self.rhs.cols()
    }

    /// The problem restricted to one right-hand side.
    pub fn column_problem(&self, col: usize) -> Result<LsProblem> {
        if col >= self.r() {
            return Err(dim(format!("rhs column {col} out of range")));
        }
        let mut p = LsProblem::new(self.a.clone(), self.rhs.select_cols(&[col]))?;
        if let Some(x) = &self.x_true {
            p = p.with_truth(x.select_cols(&[col]), self.sigma)?;
        }
        Ok(p)
    }

    /// The LS solution of every right-hand side.
    pub fn ls_solution(&self) -> Result<DenseMatrix> {
        qr_solve(&self.a, &self.rhs)
    }

    /// `½‖A x − b_col‖²`.
    pub fn objective(&self, x: &DenseMatrix, rhs_col: usize) -> Result<f64> {
        if x.shape() != (self.n(), 1) {
            return Err(dim(format!(
                "x is {}x{}, expected {}x1",
                x.rows(),
                x.cols(),
                self.n()
            )));
        }
        if rhs_col >= self.r() {
            return Err(dim(format!("rhs column {rhs_col} out of range")));
        }
        let ax = self.a.mul_unchecked(x);
        Ok(0.5
            * (0..self.m())
                .map(|i| (ax[(i, 0)] - self.rhs[(i, rhs_col)]).powi(2))
                .sum::<f64>())
    }

    /// `½‖A X − B‖_F²` summed over all right-hand sides.
    pub fn objective_all(&self, x: &DenseMatrix) -> Result<f64> {
        if x.shape() != (self.n(), self.r()) {
            return Err(dim("iterate shape does not match the problem"));
        }
        let res = self.a.mul_unchecked(x).sub(&self.rhs)?;
        Ok(0.5 * res.data().iter().map(|v| v * v).sum::<f64>())
    }
}

/// Strictly positive per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(arg(format!("weight {i} is not a positive finite number")));
        }
        Ok(Self(values))
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Random regression problem: standard-normal `A`, `x_true = 1`, and
/// `b = A x_true + ε` with `ε ~ N(0, σ²)`.
pub fn generate_regression(m: usize, n: usize, sigma: f64, seed: u64) -> Result<LsProblem> {
    if n == 0 || m < n {
        return Err(dim(format!("need m >= n >= 1, got m={m}, n={n}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(arg("sigma must be a nonnegative finite number"));
    }
    let seed = Seed(seed);
    let mut rng = seed.stream(STREAM_MATRIX);
    let a = DenseMatrix::from_fn(m, n, |_, _| standard_normal(&mut rng));
    let x_true = DenseMatrix::from_raw(n, 1, vec![1.0; n]);
    let mut b = a.mul_unchecked(&x_true);
    if sigma > 0.0 {
        let mut noise = seed.stream(STREAM_NOISE);
        for v in b.data_mut() {
            *v += sigma * standard_normal(&mut noise);
        }
    }
    LsProblem::new(a, b)?.with_truth(x_true, Some(sigma))
}

/// `argmin (b − A x)ᵀ diag(w) (b − A x)`, solved by QR on the row-scaled system.
pub fn weighted_solve(a: &DenseMatrix, b: &DenseMatrix, w: &WeightVector) -> Result<DenseMatrix> {
    if w.values().len() != a.rows() || b.rows() != a.rows() {
        return Err(dim("weights, A and b must have the same number of rows"));
    }
    let mut sa = a.clone();
    let mut sb = b.clone();
    for (i, &wi) in w.values().iter().enumerate() {
        let s = wi.sqrt();
        sa.row_mut(i).iter_mut().for_each(|v| *v *= s);
        sb.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    qr_solve(&sa, &sb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example(mu: f64, nu: f64) -> (DenseMatrix, DenseMatrix) {
        (
            DenseMatrix::from_rows(&[&[mu, 0.0], &[0.0, 1.0], &[1.0, -1.0]]).unwrap(),
            DenseMatrix::column(&[1.0, 1.0, nu]),
        )
    }

    #[test]
    fn noiseless_regression_is_consistent() {
        let p = generate_regression(5, 3, 0.0, 7).unwrap();
        let ones = DenseMatrix::column(&[1.0; 3]);
        assert_eq!(p.objective(&ones, 0).unwrap(), 0.0);
    }

    #[test]
    fn regression_is_reproducible() {
        assert_eq!(
            generate_regression(5, 3, 1.0, 7).unwrap(),
            generate_regression(5, 3, 1.0, 7).unwrap()
        );
        assert_ne!(
            generate_regression(5, 3, 1.0, 7).unwrap().a(),
            generate_regression(5, 3, 1.0, 8).unwrap().a()
        );
    }

    #[test]
    fn regression_noise_level() {
        let p = generate_regression(2000, 50, 1.0, 1).unwrap();
        let ones = DenseMatrix::column(&[1.0; 50]);
        let mse = 2.0 * p.objective(&ones, 0).unwrap() / 2000.0;
        assert!((mse - 1.0).abs() < 0.2, "mse {mse}");
    }

    #[test]
    fn regression_rejects_wide() {
        assert!(generate_regression(2, 3, 0.0, 1).is_err());
        assert!(generate_regression(2, 0, 0.0, 1).is_err());
    }

    #[test]
    fn objective_by_hand() {
        let p = LsProblem::new(DenseMatrix::identity(2), DenseMatrix::column(&[1.0, 1.0])).unwrap();
        assert_eq!(p.objective(&DenseMatrix::column(&[1.0, 1.0]), 0).unwrap(), 0.0);
        assert_eq!(p.objective(&DenseMatrix::column(&[0.0, 0.0]), 0).unwrap(), 1.0);
        assert!(p.objective(&DenseMatrix::column(&[0.0]), 0).is_err());
    }

    #[test]
    fn objective_is_minimal_at_ls_solution() {
        let (a, b) = example(1.0, 10.0);
        let p = LsProblem::new(a, b).unwrap();
        let xhat = p.ls_solution().unwrap();
        let f0 = p.objective(&xhat, 0).unwrap();
        for di in -5..=5 {
            for dj in -5..=5 {
                let x = DenseMatrix::column(&[
                    xhat[(0, 0)] + 0.01 * di as f64,
                    xhat[(1, 0)] + 0.01 * dj as f64,
                ]);
                assert!(p.objective(&x, 0).unwrap() >= f0);
            }
        }
    }

    #[test]
    fn example_solutions_by_qr() {
        let (a, b) = example(1.0, 0.0);
        let x = qr_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14 && (x[(1, 0)] - 1.0).abs() < 1e-14);
        let (a, b) = example(1.0, 10.0);
        let x = qr_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - 13.0 / 3.0).abs() < 1e-13);
        assert!((x[(1, 0)] + 7.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn weighted_examples() {
        let (a, b) = example(1.0, 10.0);
        let unweighted = weighted_solve(&a, &b, &WeightVector::ones(3)).unwrap();
        assert!(unweighted.sub(&qr_solve(&a, &b).unwrap()).unwrap().max_abs() < 1e-12);

        let w = WeightVector::new(vec![1.0, 1.0, 0.5]).unwrap();
        let x = weighted_solve(&a, &b, &w).unwrap();
        assert!((x[(0, 0)] - 3.5).abs() < 1e-13 && (x[(1, 0)] + 1.5).abs() < 1e-13);

        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn duplicated_row_with_halved_weights() {
        let (a, b) = example(2.0, 3.0);
        let w = WeightVector::new(vec![1.0, 0.7, 0.4]).unwrap();
        let x = weighted_solve(&a, &b, &w).unwrap();
        let a2 = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0], &[1.0, -1.0], &[1.0, -1.0]])
            .unwrap();
        let b2 = DenseMatrix::column(&[1.0, 1.0, 3.0, 3.0]);
        let w2 = WeightVector::new(vec![1.0, 0.7, 0.2, 0.2]).unwrap();
        let x2 = weighted_solve(&a2, &b2, &w2).unwrap();
        assert!(x.sub(&x2).unwrap().max_abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn qr_satisfies_normal_equations(m in 50usize..200, n in 1usize..50, seed in any::<u64>()) {
            let p = generate_regression(m, n, 1.0, seed).unwrap();
            let x = p.ls_solution().unwrap();
            let res = p.a().matmul(&x).unwrap().sub(p.rhs()).unwrap();
            let g = p.a().t_matmul(&res).unwrap();
            let atb = p.a().t_matmul(p.rhs()).unwrap();
            prop_assert!(g.frobenius_norm() <= 1e-8 * atb.frobenius_norm());
        }

        #[test]
        fn unit_weights_match_qr(seed in any::<u64>()) {
            let p = generate_regression(30, 4, 0.5, seed).unwrap();
            let w = weighted_solve(p.a(), p.rhs(), &WeightVector::ones(30)).unwrap();
            let x = p.ls_solution().unwrap();
            prop_assert!(w.sub(&x).unwrap().max_abs() <= 1e-12 * (1.0 + x.max_abs()));
        }
    }
}
