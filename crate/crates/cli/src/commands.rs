use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sqnls::analysis::{
    estimate_P, estimate_P_monte_carlo, omega_sweep, unbiasedness_study, write_omega_csv,
    x_tilde_from_p, ExampleParams,
};
use sqnls::elm::{
    accuracy, augment_dataset, init_hidden, load_model, read_idx, save_model, sqn_default_config,
    synthetic_blobs, train, ImageDataset, TrainMethod,
};
use sqnls::io::format_f64;
use sqnls::sketch::{empirical_moment_deviation, stratified_moment_deviation};
use sqnls::{run_multi_rhs, DirectionStrategy, Reference, SketchSpec};

use crate::config::{read_entries, RunConfig, SketchChoice, XtildeMode};
use crate::CliError;

/// Monte Carlo draws used for `refs.xtilde_mode = monte_carlo`.
pub const XTILDE_SAMPLES: usize = 20_000;

fn write_out(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| CliError::Io(p.to_path_buf(), e)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// `start:end:count` (inclusive, evenly spaced) or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid {text:?} is not `value` or `start:end:count`"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![v.trim().parse().map_err(|_| bad())?]),
        [a, b, c] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let c: usize = c.trim().parse().map_err(|_| bad())?;
            match c {
                0 => Err(bad()),
                1 => Ok(vec![a]),
                _ => Ok((0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect()),
            }
        }
        _ => Err(bad()),
    }
}

fn svd_tol(strategy: &DirectionStrategy) -> f64 {
    match strategy {
        DirectionStrategy::Newton { svd_tol } => *svd_tol,
        _ => 0.0,
    }
}

pub struct SolveSummary {
    pub iterations: usize,
    pub stop_reason: String,
    pub final_errors: Vec<(String, f64)>,
}

/// Runs the configured solver and writes its trace CSV to `out` (or the config's `run.out`).
pub fn solve(cfg: &RunConfig, out: Option<&Path>) -> Result<SolveSummary, CliError> {
    let problem = cfg.load_problem()?;
    let solve_cfg = cfg.solve_config(problem.m())?;
    let mut refs = Vec::new();
    if cfg.ref_xhat {
        refs.push(Reference::new("xhat", problem.ls_solution()?));
    }
    let p = match cfg.xtilde {
        XtildeMode::None => None,
        XtildeMode::ClosedForm => {
            if solve_cfg.sketch.outcomes().is_none() {
                return Err(CliError::Usage(
                    "refs.xtilde_mode = closed_form needs a sketch with a finite, enumerable outcome space; use monte_carlo"
                        .into(),
                ));
            }
            Some(estimate_P(&solve_cfg.sketch, problem.a(), 0, cfg.seed, svd_tol(&cfg.strategy))?.p_hat)
        }
        XtildeMode::MonteCarlo => Some(
            estimate_P_monte_carlo(
                &solve_cfg.sketch,
                problem.a(),
                XTILDE_SAMPLES,
                cfg.seed,
                svd_tol(&cfg.strategy),
            )?
            .p_hat,
        ),
    };
    if let Some(p) = p {
        refs.push(Reference::new("xtilde", x_tilde_from_p(problem.a(), problem.rhs(), &p)?));
    }
    let (_, report) = run_multi_rhs(&problem, &solve_cfg, &refs, cfg.seed)?;
    let out = out.unwrap_or(&cfg.out);
    write_out(Some(out), &report.trace_csv())?;
    Ok(SolveSummary {
        iterations: report.iterations,
        stop_reason: report.stop_reason.to_string(),
        final_errors: report
            .ref_names
            .iter()
            .map(|n| (n.clone(), report.final_err(n).unwrap_or(f64::NAN)))
            .collect(),
    })
}

/// Moment check of the sketch in a config file (`problem.m` and `sketch.*`).
/// Returns the CSV and the deviation.
pub fn sketch_verify(spec_path: &Path, n: usize, seed: u64) -> Result<(String, f64), CliError> {
    let entries = read_entries(spec_path)?;
    let spec = entries.sketch()?.build(entries.sketch_rows()?)?;
    let dev = empirical_moment_deviation(&spec, n, seed)?;
    let exact = stratified_moment_deviation(&spec);
    let mut csv = String::from("family,m,n_samples,deviation,exhaustive_deviation\n");
    writeln!(
        csv,
        "{},{},{n},{},{}",
        spec.family(),
        spec.m(),
        format_f64(dev),
        exact.map(format_f64).unwrap_or_default()
    )
    .unwrap();
    Ok((csv, dev))
}

pub fn omega(mu: &str, nu: &str, out: Option<&Path>) -> Result<(), CliError> {
    let rows = omega_sweep(&parse_grid(mu)?, &parse_grid(nu)?)?;
    let mut buf = Vec::new();
    write_omega_csv(&rows, &mut buf).expect("in-memory write");
    write_out(out, &String::from_utf8(buf).expect("ascii"))
}

/// The four Experiment-1 sketch families at the configured `ℓ`.
pub fn comparison_sketches(cfg: &RunConfig, m: usize) -> Result<Vec<SketchSpec>, CliError> {
    let (ell, psi) = match &cfg.sketch {
        SketchChoice::SparseRandom { ell, psi, .. } => (*ell, *psi),
        SketchChoice::BlockKaczmarz { block_size, .. } => (*block_size, 0.1),
        SketchChoice::Kaczmarz { ell } | SketchChoice::SparseRademacher { ell, .. } => (*ell, 0.1),
    };
    Ok(vec![
        SketchSpec::block_kaczmarz(m, ell)?,
        SketchSpec::uniform_columns(m, ell)?,
        SketchSpec::sparse_rademacher(m, ell, ell)?,
        SketchSpec::sparse_random(m, ell, psi, None)?,
    ])
}

/// One row per (distribution, checkpoint): `distribution,k,rows_touched_cum,full_f,err_xhat`.
pub fn compare_sketches(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let problem = cfg.load_problem()?;
    let xhat = problem.ls_solution()?;
    let every = if cfg.trace_every == 0 { 10 } else { cfg.trace_every };
    let mut csv = String::from("distribution,k,rows_touched_cum,full_f,err_xhat\n");
    for spec in comparison_sketches(cfg, problem.m())? {
        let mut solve_cfg = cfg.solve_config(problem.m())?;
        solve_cfg.sketch = spec;
        solve_cfg.trace_every = every;
        let refs = [Reference::new("xhat", xhat.clone())];
        let (_, report) = run_multi_rhs(&problem, &solve_cfg, &refs, cfg.seed)?;
        for r in report.trace.iter().filter(|r| r.k % every == 0 || r.k == report.iterations) {
            let full_f = match r.full_f {
                Some(f) => f,
                None => problem.objective_all(&report.final_x)?,
            };
            writeln!(
                csv,
                "{},{},{},{},{}",
                solve_cfg.sketch.family(),
                r.k,
                r.rows_touched_cum,
                format_f64(full_f),
                format_f64(r.err_to_ref[0])
            )
            .unwrap();
        }
    }
    write_out(out, &csv)
}

pub fn unbiasedness(mu: f64, nu: f64, sigma: f64, trials: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let study = unbiasedness_study(ExampleParams::new(mu, nu)?, sigma, trials, seed)?;
    let mut buf = Vec::new();
    study.write_csv(&mut buf).expect("in-memory write");
    write_out(out, &String::from_utf8(buf).expect("ascii"))
}

/// Where ELM samples come from.
#[derive(Debug, Clone)]
pub enum ElmData {
    Idx { images: PathBuf, labels: PathBuf },
    /// `count` synthetic 2-class blobs in `dim` dimensions, after skipping the first `skip`.
    Blobs { count: usize, dim: usize, skip: usize },
}

pub const BLOB_SEPARATION: f64 = 4.0;

fn load_elm_data(data: &ElmData, seed: u64) -> Result<ImageDataset, CliError> {
    Ok(match data {
        ElmData::Idx { images, labels } => read_idx(images, labels)?,
        ElmData::Blobs { count, dim, skip } => {
            synthetic_blobs(count + skip, *dim, 2, BLOB_SEPARATION, seed)?.split(*skip).1
        }
    })
}

pub struct ElmTrainArgs {
    pub data: ElmData,
    pub hidden: usize,
    pub sqn: bool,
    pub augment: usize,
    pub model: PathBuf,
    pub seed: u64,
}

/// Trains and saves a model; returns a one-row CSV summary.
pub fn elm_train(args: &ElmTrainArgs) -> Result<String, CliError> {
    let mut data = load_elm_data(&args.data, args.seed)?;
    if args.augment > 0 {
        if data.height() < 2 {
            return Err(CliError::Usage("--augment needs image data with a 2-D raster".into()));
        }
        data = augment_dataset(&data, args.augment, args.seed);
    }
    let model = init_hidden(args.hidden, data.dim(), args.seed)?;
    let method = if args.sqn {
        TrainMethod::Sqn(sqn_default_config(data.len())?)
    } else {
        TrainMethod::QrBaseline
    };
    let trained = train(&model, &data, &method, args.seed)?;
    save_model(&trained, &args.model)?;
    let acc = accuracy(&trained, &data)?;
    let (iters, reason) = trained
        .report()
        .map_or((0, String::new()), |r| (r.iterations, r.stop_reason.to_string()));
    Ok(format!(
        "method,n_train,n_hidden,train_accuracy,iterations,stop_reason\n{},{},{},{},{iters},{reason}\n",
        if args.sqn { "sqn" } else { "qr" },
        data.len(),
        args.hidden,
        format_f64(acc)
    ))
}

pub fn elm_eval(model: &Path, data: &ElmData, seed: u64) -> Result<String, CliError> {
    let model = load_model(model)?;
    let data = load_elm_data(data, seed)?;
    let acc = accuracy(&model, &data)?;
    Ok(format!("n_samples,accuracy\n{},{}\n", data.len(), format_f64(acc)))
}
