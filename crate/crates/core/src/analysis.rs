//! Where stochastic Newton iterates go, and how that compares with the LS
//! solution.
//!
//! Stochastic Newton converges to `x̃ = (PA)⁻¹ P b` with
//! `P = E[(WᵀA)† Wᵀ]`, which differs from `x̂` unless the system is consistent
//! or `null(Aᵀ) ⊆ null(P)`. This module computes `P` (exactly for finite
//! sketch spaces, by Monte Carlo otherwise), `x̃`, both estimators'
//! covariances, and a closed-form 3×2 example.

use std::io::Write;

use crate::error::{arg, dim, Result};
use crate::io::format_f64;
use crate::linalg::{pseudo_solve, qr_solve};
use crate::matrix::DenseMatrix;
use crate::par;
use crate::rng::{standard_normal, Seed};
use crate::sketch::{apply_columns, draw, SketchSample, SketchSpec};

/// Parameters `(μ, ν)` of the 3×2 example `A = [[μ,0],[0,1],[1,−1]]`, `b = (1,1,ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleParams {
    pub mu: f64,
    pub nu: f64,
}

impl ExampleParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() || !nu.is_finite() {
            return Err(arg(format!("example needs finite mu != 0, got mu = {mu}")));
        }
        Ok(Self { mu, nu })
    }
}

pub fn example_problem(p: ExampleParams) -> Result<(DenseMatrix, DenseMatrix)> {
    let p = ExampleParams::new(p.mu, p.nu)?;
    Ok((
        DenseMatrix::from_rows(&[&[p.mu, 0.0], &[0.0, 1.0], &[1.0, -1.0]])?,
        DenseMatrix::column(&[1.0, 1.0, p.nu]),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSolutions {
    pub xhat: DenseMatrix,
    pub xtilde: DenseMatrix,
    /// `‖x̂ − x̃‖`.
    pub omega: f64,
}

/// Closed forms of `x̂` and of the single-row Kaczmarz limit `x̃` for the example.
pub fn example_solutions(p: ExampleParams) -> Result<ExampleSolutions> {
    let ExampleParams { mu, nu } = ExampleParams::new(p.mu, p.nu)?;
    let d = 2.0 * mu * mu + 1.0;
    let xhat = [(2.0 * mu + nu + 1.0) / d, (mu - mu * mu * nu + mu * mu + 1.0) / d];
    let xtilde = [(1.0 + nu + 3.0 / mu) / 4.0, (3.0 - nu + 1.0 / mu) / 4.0];
    let omega = ((xhat[0] - xtilde[0]).powi(2) + (xhat[1] - xtilde[1]).powi(2)).sqrt();
    Ok(ExampleSolutions {
        xhat: DenseMatrix::column(&xhat),
        xtilde: DenseMatrix::column(&xtilde),
        omega,
    })
}

/// `Aᵀ diag(1/‖a_i‖²)`, the single-row Kaczmarz `P` up to the uniform row
/// probability `1/m` (which does not change `x̃`).
#[allow(non_snake_case)]
pub fn row_kaczmarz_P(a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut p = a.transpose();
    for i in 0..a.rows() {
        let nn: f64 = a.row(i).iter().map(|v| v * v).sum();
        if nn == 0.0 {
            return Err(arg(format!("row {i} of A is zero")));
        }
        for j in 0..a.cols() {
            p[(j, i)] /= nn;
        }
    }
    Ok(p)
}

/// Estimate of `P = E[(WᵀA)† Wᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PEstimate {
    pub p_hat: DenseMatrix,
    pub n_samples: usize,
    /// Largest entrywise standard error; zero for exact enumeration.
    pub std_err: f64,
}

/// `(WᵀA)† Wᵀ` accumulated into `sum` (and its square into `sumsq`).
fn accumulate_h(
    sample: &SketchSample,
    a: &DenseMatrix,
    svd_tol: f64,
    sum: &mut DenseMatrix,
    sumsq: Option<&mut DenseMatrix>,
) {
    let n = a.cols();
    let m = a.rows();
    let pinv = pseudo_solve(&apply_columns(sample, a), svd_tol); // n×ℓ
    let mut h = DenseMatrix::zeros(n, m);
    for (c, col) in sample.columns().iter().enumerate() {
        for &(r, v) in col {
            for i in 0..n {
                h[(i, r)] += pinv[(i, c)] * v;
            }
        }
    }
    sum.axpy(1.0, &h);
    if let Some(sq) = sumsq {
        for (s, v) in sq.data_mut().iter_mut().zip(h.data()) {
            *s += v * v;
        }
    }
}

/// Exact `P` when the sketch's outcome space is enumerable (every outcome once,
/// equal weights); Monte Carlo with `n_samples` draws otherwise.
#[allow(non_snake_case)]
pub fn estimate_P(
    spec: &SketchSpec,
    a: &DenseMatrix,
    n_samples: usize,
    seed: u64,
    svd_tol: f64,
) -> Result<PEstimate> {
    spec.validate()?;
    if spec.m() != a.rows() {
        return Err(dim("sketch and A disagree on m"));
    }
    match spec.outcomes() {
        Some(outcomes) => {
            let mut sum = DenseMatrix::zeros(a.cols(), a.rows());
            for s in &outcomes {
                accumulate_h(s, a, svd_tol, &mut sum, None);
            }
            sum.scale_mut(1.0 / outcomes.len() as f64);
            Ok(PEstimate {
                p_hat: sum,
                n_samples: outcomes.len(),
                std_err: 0.0,
            })
        }
        None => estimate_P_monte_carlo(spec, a, n_samples, seed, svd_tol),
    }
}

const P_CHUNK: usize = 1024;

/// Monte Carlo estimate of `P` regardless of the outcome space.
#[allow(non_snake_case)]
pub fn estimate_P_monte_carlo(
    spec: &SketchSpec,
    a: &DenseMatrix,
    n_samples: usize,
    seed: u64,
    svd_tol: f64,
) -> Result<PEstimate> {
    if n_samples < 2 {
        return Err(arg("n_samples must be at least 2"));
    }
    if spec.m() != a.rows() {
        return Err(dim("sketch and A disagree on m"));
    }
    let (n, m) = (a.cols(), a.rows());
    let seed = Seed(seed);
    let partials = par::map_blocks(n_samples, P_CHUNK, |chunk, _, len| {
        let mut rng = seed.stream(chunk as u64);
        let mut sum = DenseMatrix::zeros(n, m);
        let mut sumsq = DenseMatrix::zeros(n, m);
        for _ in 0..len {
            let s = draw(spec, &mut rng);
            accumulate_h(&s, a, svd_tol, &mut sum, Some(&mut sumsq));
        }
        (sum, sumsq)
    });
    let mut sum = DenseMatrix::zeros(n, m);
    let mut sumsq = DenseMatrix::zeros(n, m);
    for (s, q) in &partials {
        sum.axpy(1.0, s);
        sumsq.axpy(1.0, q);
    }
    let count = n_samples as f64;
    let mean = sum.scale(1.0 / count);
    let std_err = mean
        .data()
        .iter()
        .zip(sumsq.data())
        .map(|(mu, sq)| {
            let var = ((sq - count * mu * mu) / (count - 1.0)).max(0.0);
            (var / count).sqrt()
        })
        .fold(0.0, f64::max);
    Ok(PEstimate {
        p_hat: mean,
        n_samples,
        std_err,
    })
}

/// `x̃ = (PA)⁻¹ P b`, solved by QR on `PA`.
pub fn x_tilde_from_p(a: &DenseMatrix, b: &DenseMatrix, p: &DenseMatrix) -> Result<DenseMatrix> {
    if p.shape() != (a.cols(), a.rows()) || b.rows() != a.rows() {
        return Err(dim("P must be n×m and b must have m rows"));
    }
    qr_solve(&p.matmul(a)?, &p.matmul(b)?)
}

/// `σ²(AᵀA)⁻¹` and `σ²(PA)⁻¹PPᵀ(AᵀPᵀ)⁻¹`.
pub fn covariances(
    sigma: f64,
    a: &DenseMatrix,
    p: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if p.shape() != (a.cols(), a.rows()) {
        return Err(dim("P must be n×m"));
    }
    let n = a.cols();
    let s2 = sigma * sigma;
    let ata = a.t_matmul(a)?;
    let mut var_hat = qr_solve(&ata, &DenseMatrix::identity(n))?;
    var_hat.symmetrize();
    let k = qr_solve(&p.matmul(a)?, p)?;
    let mut var_tilde = k.mul_t_unchecked(&k);
    var_tilde.symmetrize();
    Ok((var_hat.scale(s2), var_tilde.scale(s2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaRow {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
}

/// `ω(μ, ν)` over the grid, `μ` varying slowest.
pub fn omega_sweep(mu_grid: &[f64], nu_grid: &[f64]) -> Result<Vec<OmegaRow>> {
    let mut rows = Vec::with_capacity(mu_grid.len() * nu_grid.len());
    for &mu in mu_grid {
        for &nu in nu_grid {
            let s = example_solutions(ExampleParams::new(mu, nu)?)?;
            rows.push(OmegaRow {
                mu,
                nu,
                omega: s.omega,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `mu,nu,omega`.
pub fn write_omega_csv<W: Write>(rows: &[OmegaRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "mu,nu,omega")?;
    for r in rows {
        writeln!(out, "{},{},{}", format_f64(r.mu), format_f64(r.nu), format_f64(r.omega))?;
    }
    Ok(())
}

/// Empirical behavior of both estimators over repeated noise draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStats {
    pub mean: Vec<f64>,
    /// Standard error of each mean component.
    pub std_err: Vec<f64>,
    /// Sample covariance (`n−1` normalization).
    pub cov: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessSummary {
    pub x_true: DenseMatrix,
    pub n_trials: usize,
    pub xhat: EstimatorStats,
    pub xtilde: EstimatorStats,
}

const TRIAL_CHUNK: usize = 512;

/// Draws `b = A x_true + ε`, `ε ~ N(0, σ² I)`, on the example's `A` and solves
/// for `x̂` and the single-row Kaczmarz `x̃` each time.
///
/// `x_true` is the example's `x̂(μ, ν)`, i.e. the noiseless data is the
/// projection of `(1, 1, ν)` onto `range(A)`.
pub fn unbiasedness_study(
    p: ExampleParams,
    sigma: f64,
    n_trials: usize,
    seed: u64,
) -> Result<UnbiasednessSummary> {
    if n_trials < 2 {
        return Err(arg("n_trials must be at least 2"));
    }
    if !(sigma >= 0.0) {
        return Err(arg("sigma must be nonnegative"));
    }
    let (a, b) = example_problem(p)?;
    let x_true = qr_solve(&a, &b)?;
    let b0 = a.matmul(&x_true)?;
    let pk = row_kaczmarz_P(&a)?;
    let seed = Seed(seed);
    let m = a.rows();
    let chunks = par::map_blocks(n_trials, TRIAL_CHUNK, |chunk, _, len| {
        let mut rng = seed.stream(chunk as u64);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let mut bt = b0.clone();
            for i in 0..m {
                bt[(i, 0)] += sigma * standard_normal(&mut rng);
            }
            let xh = qr_solve(&a, &bt)?;
            let xt = x_tilde_from_p(&a, &bt, &pk)?;
            out.push((xh.into_vec(), xt.into_vec()));
        }
        Ok::<_, crate::Error>(out)
    });
    let mut hats = Vec::with_capacity(n_trials);
    let mut tildes = Vec::with_capacity(n_trials);
    for c in chunks {
        for (h, t) in c? {
            hats.push(h);
            tildes.push(t);
        }
    }
    Ok(UnbiasednessSummary {
        x_true,
        n_trials,
        xhat: estimator_stats(&hats),
        xtilde: estimator_stats(&tildes),
    })
}

fn estimator_stats(samples: &[Vec<f64>]) -> EstimatorStats {
    let n = samples[0].len();
    let count = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = DenseMatrix::zeros(n, n);
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    cov.scale_mut(1.0 / (count - 1.0));
    let std_err = (0..n).map(|i| (cov[(i, i)] / count).sqrt()).collect();
    EstimatorStats { mean, std_err, cov }
}

impl UnbiasednessSummary {
    /// CSV with header `estimator,component,x_true,mean,std_err,cov_0,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.x_true.rows();
        let cov_cols: Vec<String> = (0..n).map(|j| format!("cov_{j}")).collect();
        writeln!(out, "estimator,component,x_true,mean,std_err,{}", cov_cols.join(","))?;
        for (name, st) in [("xhat", &self.xhat), ("xtilde", &self.xtilde)] {
            for i in 0..n {
                let cov: Vec<String> = (0..n).map(|j| format_f64(st.cov[(i, j)])).collect();
                writeln!(
                    out,
                    "{name},{i},{},{},{},{}",
                    format_f64(self.x_true[(i, 0)]),
                    format_f64(st.mean[i]),
                    format_f64(st.std_err[i]),
                    cov.join(",")
                )?;
            }
        }
        Ok(())
    }
}
