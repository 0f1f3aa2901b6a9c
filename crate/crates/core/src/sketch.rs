//! Random sketching matrices `W ∈ ℝ^{m×ℓ}` with `E(W Wᵀ) = β I`.
//!
//! Samples are stored as sparse columns. Applying a sample to `A` reads only
//! the rows of `A` in the sample's support, and reports how many were read.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::error::{arg, dim, Result};
use crate::matrix::DenseMatrix;
use crate::par;
use crate::rng::{partial_shuffle, sign, Seed};

/// Largest finite outcome space that is enumerated instead of sampled.
pub const MAX_ENUMERATED_OUTCOMES: usize = 10_000;

/// Tolerance on `‖QᵀQ − I‖_max` for user-supplied orthogonal matrices.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// A sketch distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchSpec {
    /// I.i.d. entries `±√(β/(ℓψ))` with probability `ψ/2` each, else zero.
    SparseRandom {
        m: usize,
        ell: usize,
        psi: f64,
        beta: f64,
    },
    /// `W` uniform over the column blocks of an orthogonal `Q` (identity when absent).
    GeneralizedKaczmarz {
        q: Option<Arc<DenseMatrix>>,
        blocks: Vec<Range<usize>>,
    },
    /// `ℓ` distinct columns of the identity, uniformly without replacement.
    KaczmarzUniformColumns { m: usize, ell: usize },
    /// Independent columns, each with `p` random `±1` entries.
    SparseRademacher { m: usize, ell: usize, p: usize },
}

impl SketchSpec {
    /// Sparse random sketch; `beta = None` selects `β = ℓ`.
    pub fn sparse_random(m: usize, ell: usize, psi: f64, beta: Option<f64>) -> Result<Self> {
        let spec = SketchSpec::SparseRandom {
            m,
            ell,
            psi,
            beta: beta.unwrap_or(ell as f64),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Identity-`Q` Kaczmarz with contiguous blocks of `block` rows; the last
    /// block holds the remainder when `block` does not divide `m`.
    pub fn block_kaczmarz(m: usize, block: usize) -> Result<Self> {
        if block == 0 || m == 0 {
            return Err(arg("block size and m must be positive"));
        }
        let sizes: Vec<usize> = (0..m)
            .step_by(block)
            .map(|s| block.min(m - s))
            .collect();
        kaczmarz_partition(None, &sizes)
    }

    pub fn uniform_columns(m: usize, ell: usize) -> Result<Self> {
        let spec = SketchSpec::KaczmarzUniformColumns { m, ell };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sparse_rademacher(m: usize, ell: usize, p: usize) -> Result<Self> {
        let spec = SketchSpec::SparseRademacher { m, ell, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SketchSpec::SparseRandom { m, ell, psi, beta } => {
                if *m == 0 || *ell == 0 {
                    return Err(arg("m and ell must be positive"));
                }
                if !(*psi > 0.0 && *psi <= 1.0) {
                    return Err(arg(format!("psi = {psi} is outside (0, 1]")));
                }
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(arg(format!("beta = {beta} must be positive")));
                }
            }
            SketchSpec::GeneralizedKaczmarz { q, blocks } => {
                let m = blocks.last().map_or(0, |b| b.end);
                let mut next = 0;
                for b in blocks {
                    if b.start != next || b.end <= b.start {
                        return Err(arg("blocks must be nonempty, contiguous and cover 0..m"));
                    }
                    next = b.end;
                }
                if m == 0 {
                    return Err(arg("at least one block is required"));
                }
                if let Some(q) = q {
                    if q.shape() != (m, m) {
                        return Err(dim(format!(
                            "Q is {}x{}, blocks cover {m} columns",
                            q.rows(),
                            q.cols()
                        )));
                    }
                    let mut gram = q.t_matmul(q)?;
                    gram.add_diagonal(-1.0);
                    let dev = gram.max_abs();
                    if dev > ORTHOGONALITY_TOL {
                        return Err(arg(format!("Q is not orthogonal: ‖QᵀQ − I‖_max = {dev:.3e}")));
                    }
                }
            }
            SketchSpec::KaczmarzUniformColumns { m, ell } => {
                if *ell == 0 || ell > m {
                    return Err(arg(format!("need 1 <= ell <= m, got ell={ell}, m={m}")));
                }
            }
            SketchSpec::SparseRademacher { m, ell, p } => {
                if *ell == 0 || *p == 0 || p > m {
                    return Err(arg(format!(
                        "need ell >= 1 and 1 <= p <= m, got ell={ell}, p={p}, m={m}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of rows of `W` (rows of the sketched matrix).
    pub fn m(&self) -> usize {
        match self {
            SketchSpec::SparseRandom { m, .. }
            | SketchSpec::KaczmarzUniformColumns { m, .. }
            | SketchSpec::SparseRademacher { m, .. } => *m,
            SketchSpec::GeneralizedKaczmarz { blocks, .. } => blocks.last().map_or(0, |b| b.end),
        }
    }

    /// Short family name used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            SketchSpec::SparseRandom { .. } => "sparse_random",
            SketchSpec::GeneralizedKaczmarz { .. } => "block_kaczmarz",
            SketchSpec::KaczmarzUniformColumns { .. } => "kaczmarz",
            SketchSpec::SparseRademacher { .. } => "sparse_rademacher",
        }
    }

    /// The outcomes of a finite, equiprobable sample space when it has at most
    /// [`MAX_ENUMERATED_OUTCOMES`] elements.
    pub fn outcomes(&self) -> Option<Vec<SketchSample>> {
        match self {
            SketchSpec::GeneralizedKaczmarz { q, blocks } => {
                let m = self.m();
                Some(
                    blocks
                        .iter()
                        .map(|b| block_sample(m, q.as_deref(), b.clone()))
                        .collect(),
                )
            }
            SketchSpec::KaczmarzUniformColumns { m, ell } => {
                if binomial_exceeds(*m, *ell, MAX_ENUMERATED_OUTCOMES) {
                    return None;
                }
                let mut out = Vec::new();
                let mut combo: Vec<usize> = (0..*ell).collect();
                loop {
                    out.push(SketchSample::from_columns(
                        *m,
                        combo.iter().map(|&r| vec![(r, 1.0)]).collect(),
                    ));
                    // Advance to the next combination in lexicographic order.
                    let mut i = *ell;
                    while i > 0 && combo[i - 1] == m - ell + i - 1 {
                        i -= 1;
                    }
                    if i == 0 {
                        break;
                    }
                    combo[i - 1] += 1;
                    for j in i..*ell {
                        combo[j] = combo[j - 1] + 1;
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

fn binomial_exceeds(n: usize, k: usize, limit: usize) -> bool {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > limit as u128 {
            return true;
        }
    }
    false
}

fn block_sample(m: usize, q: Option<&DenseMatrix>, cols: Range<usize>) -> SketchSample {
    let columns = cols
        .map(|c| match q {
            None => vec![(c, 1.0)],
            Some(q) => (0..m)
                .filter_map(|r| {
                    let v = q[(r, c)];
                    (v != 0.0).then_some((r, v))
                })
                .collect(),
        })
        .collect();
    SketchSample::from_columns(m, columns)
}

/// Builds a generalized Kaczmarz spec with contiguous column blocks of the
/// given sizes.
pub fn kaczmarz_partition(q: Option<DenseMatrix>, sizes: &[usize]) -> Result<SketchSpec> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(arg("block sizes must be positive"));
    }
    let total: usize = sizes.iter().sum();
    if let Some(q) = &q {
        if total != q.rows() {
            return Err(arg(format!(
                "block sizes sum to {total}, Q has {} columns",
                q.rows()
            )));
        }
    }
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        blocks.push(start..start + s);
        start += s;
    }
    let spec = SketchSpec::GeneralizedKaczmarz {
        q: q.map(Arc::new),
        blocks,
    };
    spec.validate()?;
    Ok(spec)
}

/// Like [`kaczmarz_partition`] but also checks that the sizes sum to `m`.
pub fn kaczmarz_partition_for(m: usize, q: Option<DenseMatrix>, sizes: &[usize]) -> Result<SketchSpec> {
    let total: usize = sizes.iter().sum();
    if total != m {
        return Err(arg(format!("block sizes sum to {total}, expected m = {m}")));
    }
    kaczmarz_partition(q, sizes)
}

/// `E(W Wᵀ) = β I`.
pub fn beta_of(spec: &SketchSpec) -> f64 {
    match spec {
        SketchSpec::SparseRandom { beta, .. } => *beta,
        SketchSpec::GeneralizedKaczmarz { blocks, .. } => 1.0 / blocks.len() as f64,
        SketchSpec::KaczmarzUniformColumns { m, ell } => *ell as f64 / *m as f64,
        SketchSpec::SparseRademacher { m, ell, p } => (*ell * *p) as f64 / *m as f64,
    }
}

/// One realization of `W`, stored as sparse columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSample {
    m: usize,
    columns: Vec<Vec<(usize, f64)>>,
    touched_rows: Vec<usize>,
}

impl SketchSample {
    /// Builds a sample; row indices within each column are sorted.
    pub fn from_columns(m: usize, mut columns: Vec<Vec<(usize, f64)>>) -> Self {
        let mut touched = Vec::new();
        for col in &mut columns {
            col.sort_by_key(|&(r, _)| r);
            touched.extend(col.iter().map(|&(r, _)| r));
        }
        touched.sort_unstable();
        touched.dedup();
        Self {
            m,
            columns,
            touched_rows: touched,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ell(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }

    pub fn touched_rows(&self) -> &[usize] {
        &self.touched_rows
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut w = DenseMatrix::zeros(self.m, self.ell());
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                w[(r, c)] = v;
            }
        }
        w
    }

    /// Adds `W Wᵀ` into the dense `m×m` accumulator.
    fn accumulate_outer(&self, acc: &mut [f64]) {
        for col in &self.columns {
            for &(r1, v1) in col {
                let row = &mut acc[r1 * self.m..(r1 + 1) * self.m];
                for &(r2, v2) in col {
                    row[r2] += v1 * v2;
                }
            }
        }
    }
}

/// Draws one sample from `spec`.
pub fn draw<R: Rng + ?Sized>(spec: &SketchSpec, rng: &mut R) -> SketchSample {
    match spec {
        SketchSpec::SparseRandom { m, ell, psi, beta } => {
            let mag = (beta / (*ell as f64 * psi)).sqrt();
            let half = psi / 2.0;
            let columns = (0..*ell)
                .map(|_| {
                    (0..*m)
                        .filter_map(|r| {
                            let u: f64 = rng.random();
                            if u < half {
                                Some((r, mag))
                            } else if u < *psi {
                                Some((r, -mag))
                            } else {
                                None
                            }
                        })
                        .collect()
                })
                .collect();
            SketchSample::from_columns(*m, columns)
        }
        SketchSpec::GeneralizedKaczmarz { q, blocks } => {
            let b = rng.random_range(0..blocks.len());
            block_sample(spec.m(), q.as_deref(), blocks[b].clone())
        }
        SketchSpec::KaczmarzUniformColumns { m, ell } => {
            let mut pool: Vec<usize> = (0..*m).collect();
            let rows = partial_shuffle(rng, &mut pool, *ell);
            SketchSample::from_columns(*m, rows.iter().map(|&r| vec![(r, 1.0)]).collect())
        }
        SketchSpec::SparseRademacher { m, ell, p } => {
            let mut pool: Vec<usize> = (0..*m).collect();
            let columns = (0..*ell)
                .map(|_| {
                    let mut rows = partial_shuffle(rng, &mut pool, *p).to_vec();
                    rows.sort_unstable();
                    rows.into_iter().map(|r| (r, sign(rng))).collect()
                })
                .collect();
            SketchSample::from_columns(*m, columns)
        }
    }
}

/// `WᵀA` and `WᵀB` for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketched {
    pub wa: DenseMatrix,
    pub wb: DenseMatrix,
    pub rows_touched: usize,
}

/// Computes `WᵀA` and `WᵀB`, reading only rows of `A` and `B` in the sample's support.
pub fn sketch_apply(sample: &SketchSample, a: &DenseMatrix, b: &DenseMatrix) -> Result<Sketched> {
    if a.rows() != sample.m || b.rows() != sample.m {
        return Err(dim(format!(
            "sketch has {} rows but A has {} and B has {}",
            sample.m,
            a.rows(),
            b.rows()
        )));
    }
    Ok(Sketched {
        wa: apply_columns(sample, a),
        wb: apply_columns(sample, b),
        rows_touched: sample.touched_rows.len(),
    })
}

/// `WᵀM` for a sparse `W`.
pub(crate) fn apply_columns(sample: &SketchSample, mat: &DenseMatrix) -> DenseMatrix {
    let n = mat.cols();
    let mut out = DenseMatrix::zeros(sample.ell(), n);
    for (c, col) in sample.columns.iter().enumerate() {
        let dst = out.row_mut(c);
        for &(r, v) in col {
            if v == 1.0 {
                dst.iter_mut().zip(mat.row(r)).for_each(|(d, s)| *d += s);
            } else {
                dst.iter_mut().zip(mat.row(r)).for_each(|(d, s)| *d += v * s);
            }
        }
    }
    out
}

/// Samples per Monte Carlo chunk; each chunk draws from its own stream.
const MOMENT_CHUNK: usize = 4096;
/// Chunks accumulated concurrently before folding into the running total.
const MOMENT_WAVE: usize = 8;

/// `max |(1/β)(1/N) Σ W Wᵀ − I|` over `N` independent draws.
pub fn empirical_moment_deviation(spec: &SketchSpec, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(arg("n_samples must be at least 1"));
    }
    spec.validate()?;
    let m = spec.m();
    let seed = Seed(seed);
    let n_chunks = n_samples.div_ceil(MOMENT_CHUNK);
    let mut total = vec![0.0; m * m];
    for wave_start in (0..n_chunks).step_by(MOMENT_WAVE) {
        let wave = MOMENT_WAVE.min(n_chunks - wave_start);
        let partials = par::map_indexed(wave, |w| {
            let chunk = wave_start + w;
            let start = chunk * MOMENT_CHUNK;
            let len = MOMENT_CHUNK.min(n_samples - start);
            let mut rng = seed.stream(chunk as u64);
            let mut acc = vec![0.0; m * m];
            for _ in 0..len {
                draw(spec, &mut rng).accumulate_outer(&mut acc);
            }
            acc
        });
        for p in partials {
            total.iter_mut().zip(&p).for_each(|(t, v)| *t += v);
        }
    }
    Ok(identity_deviation(&total, m, n_samples as f64, beta_of(spec)))
}

/// Exact second-moment deviation over an enumerable outcome space, each
/// outcome taken once. `None` when the space is too large or infinite.
pub fn stratified_moment_deviation(spec: &SketchSpec) -> Option<f64> {
    let outcomes = spec.outcomes()?;
    let m = spec.m();
    let mut total = vec![0.0; m * m];
    for s in &outcomes {
        s.accumulate_outer(&mut total);
    }
    Some(identity_deviation(&total, m, outcomes.len() as f64, beta_of(spec)))
}

fn identity_deviation(sum: &[f64], m: usize, count: f64, beta: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let v = sum[i * m + j] / count / beta;
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}
