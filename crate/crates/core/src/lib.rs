//! Stochastic approximation solvers for overdetermined least squares.
//!
//! Each iteration draws a random sketch `W`, compresses the residual to
//! `Wᵀ(Ax − b)` and steps along a gradient, Newton or quasi-Newton direction
//! built from `WᵀA`. Alongside the solvers the crate carries the oracles used
//! to check them: exact QR and weighted solves, the limit `x̃` of stochastic
//! Newton, sketch moment checks, and an extreme-learning-machine pipeline.
//!
//! ```
//! use sqnls::{generate_regression, run, DirectionStrategy, QnParams, Reference, SketchSpec, SolveConfig};
//!
//! let problem = generate_regression(400, 10, 0.5, 7).unwrap();
//! let xhat = problem.ls_solution().unwrap();
//! let sketch = SketchSpec::block_kaczmarz(400, 40).unwrap();
//! let mut config = SolveConfig::new(sketch, DirectionStrategy::QuasiNewton(QnParams::default()));
//! config.rule.max_iters = 300;
//! let report = run(&problem, &config, &[Reference::new("xhat", xhat)], 1).unwrap();
//! assert!(report.final_err("xhat").unwrap() < 0.05);
//! ```

pub mod analysis;
pub mod directions;
pub mod elm;
mod error;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod par;
pub mod problem;
pub mod rng;
pub mod sketch;
pub mod solver;

pub use directions::{DirectionStrategy, QnParams};
pub use error::{Error, Result};
pub use linalg::qr_solve;
pub use matrix::DenseMatrix;
pub use problem::{generate_regression, weighted_solve, LsProblem, WeightVector};
pub use sketch::{SketchSample, SketchSpec};
pub use solver::{
    run, run_multi_rhs, run_seeds, InitialGuess, Reference, SolveConfig, SolveReport, StepSchedule,
    StopMode, StopReason, StoppingRule,
};
