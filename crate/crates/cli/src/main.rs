use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqnls_cli::commands::{self, ElmData, ElmTrainArgs};
use sqnls_cli::config::parse_config;
use sqnls_cli::CliError;

/// Stochastic Newton and quasi-Newton least-squares experiments.
#[derive(Parser)]
#[command(name = "sqnls", version)]
struct Cli {
    /// Seed for every random draw; overrides `problem.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver and write its trace CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV path; defaults to `run.out` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate how far E(WWᵀ)/β is from the identity.
    SketchVerify {
        /// Config with `problem.m` and `sketch.*` keys.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        /// Exit with status 1 when the deviation is not below this value.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between the LS solution and the stochastic Newton limit on the 3×2 example.
    Omega {
        /// `start:end:count` or a single value.
        #[arg(long)]
        mu: String,
        #[arg(long)]
        nu: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the four sketch families on one problem, tracking row accesses.
    CompareSketches {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical bias and covariance of both estimators on the 3×2 example.
    Unbiasedness {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 10.0)]
        nu: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extreme learning machine training and evaluation.
    #[command(subcommand)]
    Elm(ElmCommand),
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file.
    #[arg(long, requires = "labels", conflicts_with = "blobs")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Use this many synthetic 2-class Gaussian samples instead of IDX files.
    #[arg(long)]
    blobs: Option<usize>,
    /// Dimension of the synthetic samples.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Skip this many synthetic samples (to evaluate on points not used for training).
    #[arg(long, default_value_t = 0)]
    skip: usize,
}

impl DataArgs {
    fn source(&self) -> Result<ElmData, CliError> {
        match (&self.images, &self.labels, self.blobs) {
            (Some(i), Some(l), None) => Ok(ElmData::Idx {
                images: i.clone(),
                labels: l.clone(),
            }),
            (None, None, Some(count)) => Ok(ElmData::Blobs {
                count,
                dim: self.dim,
                skip: self.skip,
            }),
            _ => Err(CliError::Usage("give either --images and --labels, or --blobs".into())),
        }
    }
}

#[derive(Subcommand)]
enum ElmCommand {
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 300)]
        hidden: usize,
        /// `sqn` or `qr`.
        #[arg(long, default_value = "sqn", value_parser = ["sqn", "qr"])]
        method: String,
        /// Rotated copies added per image.
        #[arg(long, default_value_t = 0)]
        augment: usize,
        #[arg(long)]
        model: PathBuf,
    },
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Solve { config, out } => {
            let mut cfg = parse_config(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let s = commands::solve(&cfg, out.as_deref())?;
            let errs: Vec<String> = s.final_errors.iter().map(|(n, e)| format!("err_{n}={e:.6e}")).collect();
            println!("iterations={} stop_reason={} {}", s.iterations, s.stop_reason, errs.join(" "));
        }
        Command::SketchVerify { spec, n, threshold, out } => {
            let (csv, dev) = commands::sketch_verify(&spec, n, seed.unwrap_or(0))?;
            match out {
                Some(p) => std::fs::write(&p, &csv).map_err(|e| CliError::Io(p, e))?,
                None => print!("{csv}"),
            }
            if threshold.is_some_and(|t| !(dev < t)) {
                eprintln!("deviation {dev} is not below the threshold");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Omega { mu, nu, out } => commands::omega(&mu, &nu, out.as_deref())?,
        Command::CompareSketches { config, out } => {
            let mut cfg = parse_config(&config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            commands::compare_sketches(&cfg, out.as_deref())?;
        }
        Command::Unbiasedness { mu, nu, sigma, trials, out } => {
            commands::unbiasedness(mu, nu, sigma, trials, seed.unwrap_or(0), out.as_deref())?
        }
        Command::Elm(ElmCommand::Train { data, hidden, method, augment, model }) => {
            let csv = commands::elm_train(&ElmTrainArgs {
                data: data.source()?,
                hidden,
                sqn: method == "sqn",
                augment,
                model,
                seed: seed.unwrap_or(0),
            })?;
            print!("{csv}");
        }
        Command::Elm(ElmCommand::Eval { data, model }) => {
            print!("{}", commands::elm_eval(&model, &data.source()?, seed.unwrap_or(0))?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
