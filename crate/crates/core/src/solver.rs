//! The stochastic approximation loop.
//!
//! Each iteration draws a fresh sketch `W_k`, forms `WᵀA` and `WᵀB`, computes
//! a search direction `s_k` and sets `x_k = x_{k−1} + α_k s_k`.

use std::fmt;
use std::io::Write;

use crate::directions::{
    gradient_dir, newton_dir, qn_dir, qn_init, DirectionStrategy, QnState,
};
use crate::error::{arg, dim, Error, Result};
use crate::io::format_f64;
use crate::matrix::DenseMatrix;
use crate::par;
use crate::problem::LsProblem;
use crate::rng::{standard_normal, Seed};
use crate::sketch::{beta_of, draw, sketch_apply, SketchSpec};

const STREAM_SKETCH: u64 = 0;
const STREAM_X0: u64 = 1;

/// Step sizes `α_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `α_k = c / k`.
    Harmonic { c: f64 },
    /// `α_k = c`.
    Constant { c: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let c = match self {
            StepSchedule::Harmonic { c } | StepSchedule::Constant { c } => *c,
        };
        if c > 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(arg(format!("step constant {c} must be positive")))
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self {
            StepSchedule::Harmonic { c } => c / k as f64,
            StepSchedule::Constant { c } => *c,
        }
    }

    /// Whether `Σ α_k = ∞` and `Σ α_k² < ∞` hold for this family.
    pub fn satisfies_step_conditions(&self) -> bool {
        matches!(self, StepSchedule::Harmonic { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Stop when either tolerance test fires.
    Any,
    /// Stop only when both tolerance tests fire on the same iteration.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iters: usize,
    pub tol: f64,
    /// Number of sample objectives in each moving average.
    pub window: usize,
    pub mode: StopMode,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-4,
            window: 10,
            mode: StopMode::Both,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.window == 0 {
            return Err(arg("max_iters and window must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(arg("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    XChange,
    FChange,
    Both,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxIters => "max_iters",
            StopReason::XChange => "x_change",
            StopReason::FChange => "f_change",
            StopReason::Both => "both",
        })
    }
}

/// Evaluates the stopping tests after iteration `k = f_history.len()`.
///
/// The x-test is `‖x_{k−1} − x_k‖_∞ < √tol (1 + ‖x_k‖_∞)`. The f-test compares
/// consecutive moving averages of `window` sample objectives,
/// `|f̄_{k−1} − f̄_k| < tol (1 + f̄_{k−1})`, and is inactive until
/// `window + 1` values exist.
pub fn check_stop(
    rule: &StoppingRule,
    x_prev: &DenseMatrix,
    x_cur: &DenseMatrix,
    f_history: &[f64],
) -> Option<StopReason> {
    let step = x_prev
        .data()
        .iter()
        .zip(x_cur.data())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let x_fires = step < rule.tol.sqrt() * (1.0 + x_cur.max_abs());

    let w = rule.window;
    let k = f_history.len();
    let f_fires = k > w && {
        let cur = f_history[k - w..].iter().sum::<f64>() / w as f64;
        let prev = f_history[k - w - 1..k - 1].iter().sum::<f64>() / w as f64;
        (prev - cur).abs() < rule.tol * (1.0 + prev)
    };

    let fired = match (rule.mode, x_fires, f_fires) {
        (_, true, true) => Some(StopReason::Both),
        (StopMode::Any, true, false) => Some(StopReason::XChange),
        (StopMode::Any, false, true) => Some(StopReason::FChange),
        _ => None,
    };
    fired.or((k >= rule.max_iters).then_some(StopReason::MaxIters))
}

/// Initial iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Zero,
    /// Standard normal entries drawn from the run's seed.
    Random,
    Given(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub sketch: SketchSpec,
    pub schedule: StepSchedule,
    pub strategy: DirectionStrategy,
    pub rule: StoppingRule,
    pub x0: InitialGuess,
    /// Full objective is evaluated every `trace_every` iterations; 0 disables it.
    pub trace_every: usize,
    /// Apply the quasi-Newton matrix built from sketches `1..k−1` at iteration
    /// `k`, so it is independent of `W_k`.
    pub strict_adapted: bool,
}

impl SolveConfig {
    pub fn new(sketch: SketchSpec, strategy: DirectionStrategy) -> Self {
        Self {
            sketch,
            schedule: StepSchedule::Harmonic { c: 1.0 },
            strategy,
            rule: StoppingRule::default(),
            x0: InitialGuess::Zero,
            trace_every: 10,
            strict_adapted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sketch.validate()?;
        self.schedule.validate()?;
        self.strategy.validate()?;
        self.rule.validate()
    }
}

/// A named reference solution for error tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub name: String,
    pub x: DenseMatrix,
}

impl Reference {
    pub fn new(name: impl Into<String>, x: DenseMatrix) -> Self {
        Self {
            name: name.into(),
            x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub alpha: f64,
    /// `f_{W_k}(x_k) = ‖W_kᵀ(A x_k − B)‖²/(2β)`.
    pub sample_f: f64,
    pub full_f: Option<f64>,
    /// Relative Frobenius error to each reference, in reference order.
    pub err_to_ref: Vec<f64>,
    pub rows_touched_cum: u64,
    pub qn_rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_x: DenseMatrix,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub ref_names: Vec<String>,
    pub trace: Vec<TraceRecord>,
    pub qn_rejections: usize,
    pub qn_fallbacks: usize,
}

impl SolveReport {
    /// Error to the named reference after iteration `k` (1-based).
    pub fn err_at(&self, name: &str, k: usize) -> Option<f64> {
        let idx = self.ref_names.iter().position(|n| n == name)?;
        self.trace.get(k.checked_sub(1)?).map(|r| r.err_to_ref[idx])
    }

    pub fn final_err(&self, name: &str) -> Option<f64> {
        self.err_at(name, self.iterations)
    }

    /// Writes the trace as CSV with header
    /// `k,alpha,sample_f,full_f,err_<ref>...,rows_touched_cum,qn_rejected`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["k".to_string(), "alpha".into(), "sample_f".into(), "full_f".into()];
        header.extend(self.ref_names.iter().map(|n| format!("err_{n}")));
        header.push("rows_touched_cum".into());
        header.push("qn_rejected".into());
        writeln!(out, "{}", header.join(","))?;
        for r in &self.trace {
            let mut fields = vec![
                r.k.to_string(),
                format_f64(r.alpha),
                format_f64(r.sample_f),
                r.full_f.map(format_f64).unwrap_or_default(),
            ];
            fields.extend(r.err_to_ref.iter().map(|e| format_f64(*e)));
            fields.push(r.rows_touched_cum.to_string());
            fields.push(u8::from(r.qn_rejected).to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn trace_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// Single right-hand-side run.
pub fn run(
    problem: &LsProblem,
    config: &SolveConfig,
    refs: &[Reference],
    seed: u64,
) -> Result<SolveReport> {
    if problem.r() != 1 {
        return Err(dim(format!(
            "run expects one right-hand side, problem has {}; use run_multi_rhs",
            problem.r()
        )));
    }
    solve(problem, config, refs, seed)
}

/// All right-hand sides share one sketch stream and one quasi-Newton chain.
pub fn run_multi_rhs(
    problem: &LsProblem,
    config: &SolveConfig,
    refs: &[Reference],
    seed: u64,
) -> Result<(DenseMatrix, SolveReport)> {
    let report = solve(problem, config, refs, seed)?;
    Ok((report.final_x.clone(), report))
}

/// Independent runs over several seeds, in parallel when enabled; results are
/// returned in seed order.
pub fn run_seeds(
    problem: &LsProblem,
    config: &SolveConfig,
    refs: &[Reference],
    seeds: &[u64],
) -> Vec<Result<SolveReport>> {
    par::map_indexed(seeds.len(), |i| solve(problem, config, refs, seeds[i]))
}

fn relative_error(x: &DenseMatrix, reference: &DenseMatrix) -> f64 {
    let diff: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = reference.frobenius_norm();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

fn solve(
    problem: &LsProblem,
    config: &SolveConfig,
    refs: &[Reference],
    seed: u64,
) -> Result<SolveReport> {
    config.validate()?;
    let (n, r) = (problem.n(), problem.r());
    if config.sketch.m() != problem.m() {
        return Err(dim(format!(
            "sketch has {} rows, problem has {}",
            config.sketch.m(),
            problem.m()
        )));
    }
    for rf in refs {
        if rf.x.shape() != (n, r) {
            return Err(dim(format!("reference {} has the wrong shape", rf.name)));
        }
    }
    let seed = Seed(seed);
    let mut x = match &config.x0 {
        InitialGuess::Zero => DenseMatrix::zeros(n, r),
        InitialGuess::Random => {
            let mut rng = seed.stream(STREAM_X0);
            DenseMatrix::from_fn(n, r, |_, _| standard_normal(&mut rng))
        }
        InitialGuess::Given(x0) => {
            if x0.shape() != (n, r) {
                return Err(dim("initial guess has the wrong shape"));
            }
            x0.clone()
        }
    };
    let mut qn: Option<QnState> = match config.strategy {
        DirectionStrategy::QuasiNewton(p) => Some(qn_init(n, p)?),
        _ => None,
    };
    let beta = beta_of(&config.sketch);
    let mut rng = seed.stream(STREAM_SKETCH);
    let mut trace = Vec::with_capacity(config.rule.max_iters.min(1 << 20));
    let mut f_hist = Vec::with_capacity(trace.capacity());
    let mut rows_cum: u64 = 0;
    let mut stop_reason = StopReason::MaxIters;

    for k in 1..=config.rule.max_iters {
        let sample = draw(&config.sketch, &mut rng);
        let sk = sketch_apply(&sample, problem.a(), problem.rhs())?;
        rows_cum += sk.rows_touched as u64;

        let mut rejected = false;
        let direction = match (&config.strategy, qn.as_mut()) {
            (DirectionStrategy::Gradient, _) => {
                let mut d = gradient_dir(&sk.wa, &sk.wb, &x)?;
                d.scale_mut(1.0 / beta);
                d
            }
            (DirectionStrategy::Newton { svd_tol }, _) => newton_dir(&sk.wa, &sk.wb, &x, *svd_tol)?,
            (DirectionStrategy::QuasiNewton(_), Some(state)) => {
                if config.strict_adapted {
                    let d = qn_dir(state, &sk.wa, &sk.wb, &x)?;
                    rejected = !state.update(&sk.wa)?.accepted;
                    d
                } else {
                    rejected = !state.update(&sk.wa)?.accepted;
                    qn_dir(state, &sk.wa, &sk.wb, &x)?
                }
            }
            (DirectionStrategy::QuasiNewton(_), None) => unreachable!("state created above"),
        };

        let alpha = config.schedule.step(k);
        let mut x_next = x.clone();
        x_next.axpy(alpha, &direction);
        if !x_next.is_finite() {
            return Err(Error::Numerical(format!("iterate became non-finite at k = {k}")));
        }

        let mut res = sk.wa.mul_unchecked(&x_next);
        res.axpy(-1.0, &sk.wb);
        let sample_f = res.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * beta);
        let full_f = if config.trace_every > 0 && k % config.trace_every == 0 {
            Some(problem.objective_all(&x_next)?)
        } else {
            None
        };
        trace.push(TraceRecord {
            k,
            alpha,
            sample_f,
            full_f,
            err_to_ref: refs.iter().map(|rf| relative_error(&x_next, &rf.x)).collect(),
            rows_touched_cum: rows_cum,
            qn_rejected: rejected,
        });
        f_hist.push(sample_f);

        let stop = check_stop(&config.rule, &x, &x_next, &f_hist);
        x = x_next;
        if let Some(reason) = stop {
            stop_reason = reason;
            break;
        }
    }

    Ok(SolveReport {
        iterations: trace.len(),
        final_x: x,
        stop_reason,
        ref_names: refs.iter().map(|r| r.name.clone()).collect(),
        trace,
        qn_rejections: qn.as_ref().map_or(0, |s| s.reject_count()),
        qn_fallbacks: qn.as_ref().map_or(0, |s| s.fallback_count()),
    })
}
