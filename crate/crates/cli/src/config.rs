//! `key = value` run configuration.
//!
//! Keys are `section.name`; a `[section]` line lets the following keys drop
//! their prefix. `#` starts a comment. Every key must be one of [`KEYS`];
//! values are checked for type and range when the config is built, and every
//! error names the offending line and key.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sqnls::io::{read_matrix, MatrixFormat};
use sqnls::sketch::kaczmarz_partition_for;
use sqnls::{
    generate_regression, DirectionStrategy, InitialGuess, LsProblem, QnParams, SketchSpec,
    SolveConfig, StepSchedule, StopMode, StoppingRule,
};

use crate::CliError;

pub const KEYS: &[&str] = &[
    "problem.mode",
    "problem.m",
    "problem.n",
    "problem.sigma",
    "problem.seed",
    "problem.a_path",
    "problem.b_path",
    "sketch.family",
    "sketch.ell",
    "sketch.psi",
    "sketch.beta",
    "sketch.p",
    "sketch.block_size",
    "sketch.q_path",
    "strategy.kind",
    "strategy.lambda1",
    "strategy.lambda2",
    "strategy.cap",
    "strategy.svd_tol",
    "strategy.strict_adapted",
    "schedule.kind",
    "schedule.c",
    "stop.max_iters",
    "stop.tol",
    "stop.window",
    "stop.mode",
    "run.x0",
    "run.trace_every",
    "run.out",
    "refs.xhat",
    "refs.xtilde_mode",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generate { m: usize, n: usize, sigma: f64 },
    Files { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XtildeMode {
    None,
    /// Exact `P`: single-row Kaczmarz closed form, or enumeration of a finite sketch space.
    ClosedForm,
    MonteCarlo,
}

/// The sketch as configured; `m` is only known once the problem is loaded.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchChoice {
    SparseRandom { ell: usize, psi: f64, beta: Option<f64> },
    BlockKaczmarz { block_size: usize, q_path: Option<PathBuf> },
    Kaczmarz { ell: usize },
    SparseRademacher { ell: usize, p: usize },
}

impl SketchChoice {
    pub fn build(&self, m: usize) -> sqnls::Result<SketchSpec> {
        match self {
            SketchChoice::SparseRandom { ell, psi, beta } => SketchSpec::sparse_random(m, *ell, *psi, *beta),
            SketchChoice::BlockKaczmarz { block_size, q_path: None } => SketchSpec::block_kaczmarz(m, *block_size),
            SketchChoice::BlockKaczmarz {
                block_size,
                q_path: Some(q),
            } => {
                let q = read_matrix(q, MatrixFormat::from_path(q))?;
                let full = m / block_size;
                let mut sizes = vec![*block_size; full];
                if !m.is_multiple_of(*block_size) {
                    sizes.push(m % block_size);
                }
                kaczmarz_partition_for(m, Some(q), &sizes)
            }
            SketchChoice::Kaczmarz { ell } => SketchSpec::uniform_columns(m, *ell),
            SketchChoice::SparseRademacher { ell, p } => SketchSpec::sparse_rademacher(m, *ell, *p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: ProblemSource,
    pub seed: u64,
    pub sketch: SketchChoice,
    pub strategy: DirectionStrategy,
    pub strict_adapted: bool,
    pub schedule: StepSchedule,
    pub rule: StoppingRule,
    pub x0: InitialGuess,
    pub trace_every: usize,
    pub out: PathBuf,
    pub ref_xhat: bool,
    pub xtilde: XtildeMode,
}

impl RunConfig {
    pub fn load_problem(&self) -> sqnls::Result<LsProblem> {
        match &self.source {
            ProblemSource::Generate { m, n, sigma } => generate_regression(*m, *n, *sigma, self.seed),
            ProblemSource::Files { a, b } => LsProblem::new(
                read_matrix(a, MatrixFormat::from_path(a))?,
                read_matrix(b, MatrixFormat::from_path(b))?,
            ),
        }
    }

    pub fn solve_config(&self, m: usize) -> sqnls::Result<SolveConfig> {
        let mut cfg = SolveConfig::new(self.sketch.build(m)?, self.strategy);
        cfg.schedule = self.schedule;
        cfg.rule = self.rule;
        cfg.x0 = self.x0.clone();
        cfg.trace_every = self.trace_every;
        cfg.strict_adapted = self.strict_adapted;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Raw `key → (line, value)` pairs.
#[derive(Debug)]
pub struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (usize, String)>,
}

pub fn read_entries(path: &Path) -> Result<Entries, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse_entries(path, &text)
}

pub fn parse_entries(path: &Path, text: &str) -> Result<Entries, CliError> {
    let err = |line: usize, msg: String| CliError::Config {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut section: Option<String> = None;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KEYS.iter().any(|k| k.split('.').next() == Some(name)) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line_no, format!("expected `key = value`, found {line:?}")));
        };
        let key = key.trim();
        let full = match (&section, key.contains('.')) {
            (Some(s), false) => format!("{s}.{key}"),
            _ => key.to_string(),
        };
        if !KEYS.contains(&full.as_str()) {
            return Err(err(line_no, format!("unknown key `{full}`")));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(err(line_no, format!("key `{full}` has an empty value")));
        }
        if let Some((prev, _)) = map.get(&full) {
            return Err(err(line_no, format!("key `{full}` already set on line {prev}")));
        }
        map.insert(full, (line_no, value.to_string()));
    }
    Ok(Entries {
        path: path.to_path_buf(),
        map,
    })
}

impl Entries {
    fn err(&self, key: &str, msg: String) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: self.map.get(key).map_or(0, |(l, _)| *l),
            msg: format!("key `{key}`: {msg}"),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected {what}, found {v:?}"))),
        }
    }

    fn count(&self, key: &str, default: Option<usize>, min: usize) -> Result<usize, CliError> {
        let v = self.get::<usize>(key, "a nonnegative integer")?.or(default);
        let v = v.ok_or_else(|| self.missing(key))?;
        if v < min {
            return Err(self.err(key, format!("must be at least {min}, found {v}")));
        }
        Ok(v)
    }

    fn real(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, CliError> {
        let v = self.get::<f64>(key, "a number")?.unwrap_or(default);
        if !ok(v) {
            return Err(self.err(key, format!("must be {range}, found {v}")));
        }
        Ok(v)
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, CliError> {
        Ok(self.get::<bool>(key, "true or false")?.unwrap_or(default))
    }

    fn choice<'a>(&self, key: &str, default: Option<&'a str>, allowed: &[&'a str]) -> Result<&'a str, CliError> {
        let v = match self.raw(key) {
            Some(v) => v,
            None => return default.ok_or_else(|| self.missing(key)),
        };
        allowed
            .iter()
            .find(|a| a.eq_ignore_ascii_case(v))
            .copied()
            .ok_or_else(|| self.err(key, format!("expected one of {allowed:?}, found {v:?}")))
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing required key `{key}`"),
        }
    }

    fn existing_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let p = Path::new(v);
        let p = if p.is_relative() {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        } else {
            p.to_path_buf()
        };
        if !p.is_file() {
            return Err(self.err(key, format!("file {} does not exist", p.display())));
        }
        Ok(Some(p))
    }

    pub fn sketch(&self) -> Result<SketchChoice, CliError> {
        let family = self.choice(
            "sketch.family",
            Some("block_kaczmarz"),
            &["block_kaczmarz", "kaczmarz", "sparse_rademacher", "sparse_random"],
        )?;
        let ell = self.count("sketch.ell", Some(50), 1)?;
        Ok(match family {
            "block_kaczmarz" => SketchChoice::BlockKaczmarz {
                block_size: self.count("sketch.block_size", Some(ell), 1)?,
                q_path: self.existing_path("sketch.q_path")?,
            },
            "kaczmarz" => SketchChoice::Kaczmarz { ell },
            "sparse_rademacher" => SketchChoice::SparseRademacher {
                ell,
                p: self.count("sketch.p", Some(ell), 1)?,
            },
            _ => SketchChoice::SparseRandom {
                ell,
                psi: self.real("sketch.psi", 0.1, |v| v > 0.0 && v <= 1.0, "in (0, 1]")?,
                beta: match self.raw("sketch.beta") {
                    None => None,
                    Some(_) => Some(self.real("sketch.beta", 0.0, |v| v > 0.0 && v.is_finite(), "positive")?),
                },
            },
        })
    }

    /// `problem.m` for commands that only need a sketch.
    pub fn sketch_rows(&self) -> Result<usize, CliError> {
        self.count("problem.m", None, 1)
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mode = self.choice("problem.mode", None, &["generate", "files"])?;
        let seed = self.get::<u64>("problem.seed", "a nonnegative integer")?.unwrap_or(0);
        let source = match mode {
            "generate" => {
                let n = self.count("problem.n", None, 1)?;
                let m = self.count("problem.m", None, n)?;
                let sigma = self.real("problem.sigma", 1.0, |v| v >= 0.0 && v.is_finite(), "nonnegative")?;
                ProblemSource::Generate { m, n, sigma }
            }
            _ => ProblemSource::Files {
                a: self.existing_path("problem.a_path")?.ok_or_else(|| self.missing("problem.a_path"))?,
                b: self.existing_path("problem.b_path")?.ok_or_else(|| self.missing("problem.b_path"))?,
            },
        };
        let kind = self.choice("strategy.kind", Some("quasinewton"), &["gradient", "newton", "quasinewton"])?;
        let strategy = match kind {
            "gradient" => DirectionStrategy::Gradient,
            "newton" => DirectionStrategy::Newton {
                svd_tol: self.real("strategy.svd_tol", 0.0, |v| v >= 0.0 && v.is_finite(), "nonnegative")?,
            },
            _ => {
                let l1 = self.real("strategy.lambda1", 1e-5, |v| v > 0.0 && v.is_finite(), "positive")?;
                let l2 = self.real("strategy.lambda2", 0.0, |v| v >= 0.0 && v.is_finite(), "nonnegative")?;
                let cap = self.real("strategy.cap", f64::INFINITY, |v| v > 0.0, "positive")?;
                DirectionStrategy::QuasiNewton(
                    QnParams::new(l1, l2, cap).map_err(|e| self.err("strategy.cap", e.to_string()))?,
                )
            }
        };
        let c = self.real("schedule.c", 1.0, |v| v > 0.0 && v.is_finite(), "positive")?;
        let schedule = match self.choice("schedule.kind", Some("harmonic"), &["harmonic", "constant"])? {
            "harmonic" => StepSchedule::Harmonic { c },
            _ => StepSchedule::Constant { c },
        };
        let rule = StoppingRule {
            max_iters: self.count("stop.max_iters", Some(1000), 1)?,
            tol: self.real("stop.tol", 1e-4, |v| v > 0.0 && v.is_finite(), "positive")?,
            window: self.count("stop.window", Some(10), 1)?,
            mode: match self.choice("stop.mode", Some("both"), &["both", "any"])? {
                "both" => StopMode::Both,
                _ => StopMode::Any,
            },
        };
        let x0 = match self.choice("run.x0", Some("zero"), &["zero", "random"])? {
            "zero" => InitialGuess::Zero,
            _ => InitialGuess::Random,
        };
        let xtilde = match self.choice("refs.xtilde_mode", Some("none"), &["none", "closed_form", "monte_carlo"])? {
            "none" => XtildeMode::None,
            "closed_form" => XtildeMode::ClosedForm,
            _ => XtildeMode::MonteCarlo,
        };
        Ok(RunConfig {
            source,
            seed,
            sketch: self.sketch()?,
            strategy,
            strict_adapted: self.flag("strategy.strict_adapted", false)?,
            schedule,
            rule,
            x0,
            trace_every: self.count("run.trace_every", Some(10), 0)?,
            out: PathBuf::from(self.raw("run.out").unwrap_or("trace.csv")),
            ref_xhat: self.flag("refs.xhat", true)?,
            xtilde,
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    read_entries(path)?.run_config()
}
