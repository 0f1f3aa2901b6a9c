use proptest::prelude::*;
use sqnls::analysis::{example_problem, example_solutions, ExampleParams};
use sqnls::directions::{gradient_dir, newton_dir, qn_init};
use sqnls::linalg::{pseudo_solve, HouseholderQr};
use sqnls::sketch::{draw, sketch_apply};
use sqnls::rng::Seed;
use sqnls::{
    generate_regression, run, run_multi_rhs, DenseMatrix, DirectionStrategy, Error, InitialGuess,
    LsProblem, QnParams, Reference, SketchSpec, SolveConfig, StepSchedule, StopMode, StoppingRule,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
    a.sub(b).unwrap().max_abs() <= tol * (1.0 + b.max_abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penrose_conditions((r, c) in (1usize..7, 1usize..7), seed in 0u64..1000) {
        let mut rng = Seed(seed).stream(0);
        let m = DenseMatrix::from_fn(r, c, |_, _| sqnls::rng::standard_normal(&mut rng));
        let p = pseudo_solve(&m, 0.0);
        let mp = m.matmul(&p).unwrap();
        let pm = p.matmul(&m).unwrap();
        prop_assert!(close(&mp.matmul(&m).unwrap(), &m, 1e-9));
        prop_assert!(close(&pm.matmul(&p).unwrap(), &p, 1e-9));
        prop_assert!(mp.asymmetry() < 1e-9);
        prop_assert!(pm.asymmetry() < 1e-9);
    }

    #[test]
    fn qr_residual_is_orthogonal(a in matrix(8, 3), b in matrix(8, 2)) {
        let qr = HouseholderQr::new(&a).unwrap();
        prop_assume!(qr.check_full_rank().is_ok());
        let x = qr.solve(&b).unwrap();
        let r = a.matmul(&x).unwrap().sub(&b).unwrap();
        let g = a.t_matmul(&r).unwrap();
        prop_assert!(g.max_abs() < 1e-8 * (1.0 + a.frobenius_norm() * b.frobenius_norm()));
    }

    #[test]
    fn newton_step_lands_on_sketched_ls(wa in matrix(6, 3), wb in matrix(6, 1), x in matrix(3, 1)) {
        prop_assume!(HouseholderQr::new(&wa).unwrap().check_full_rank().is_ok());
        let d = newton_dir(&wa, &wb, &x, 0.0).unwrap();
        let next = x.add(&d).unwrap();
        let want = sqnls::qr_solve(&wa, &wb).unwrap();
        prop_assert!(close(&next, &want, 1e-8));
    }

    #[test]
    fn chain_stays_symmetric_positive(seed in 0u64..500) {
        let a = generate_regression(60, 6, 0.0, seed).unwrap();
        let spec = SketchSpec::sparse_rademacher(60, 2, 5).unwrap();
        let mut state = qn_init(6, QnParams::default()).unwrap();
        let mut rng = Seed(seed).stream(3);
        for _ in 0..30 {
            let s = sketch_apply(&draw(&spec, &mut rng), a.a(), a.rhs()).unwrap();
            state.update(&s.wa).unwrap();
            prop_assert!(state.accepted().asymmetry() <= 1e-10 * state.accepted().max_abs());
            let eig = sqnls::linalg::symmetric_eigenvalues(state.accepted());
            prop_assert!(eig[0] > 0.0);
        }
    }
}

#[test]
fn gradient_is_negative_objective_gradient() {
    let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.5]]).unwrap();
    let b = DenseMatrix::column(&[1.0, 0.0, 2.0]);
    let x = DenseMatrix::column(&[0.3, -0.2]);
    let d = gradient_dir(&a, &b, &x).unwrap();
    let problem = LsProblem::new(a, b).unwrap();
    for j in 0..2 {
        let h = 1e-6;
        let mut xp = x.clone();
        xp[(j, 0)] += h;
        let mut xm = x.clone();
        xm[(j, 0)] -= h;
        let fd = (problem.objective(&xp, 0).unwrap() - problem.objective(&xm, 0).unwrap()) / (2.0 * h);
        assert!((fd + d[(j, 0)]).abs() < 1e-7);
    }
}

fn fixed(max_iters: usize) -> StoppingRule {
    StoppingRule {
        max_iters,
        tol: f64::MIN_POSITIVE,
        window: 10,
        mode: StopMode::Both,
    }
}

#[test]
fn multi_rhs_equals_columnwise_runs() {
    let base = generate_regression(300, 8, 0.5, 4).unwrap();
    let mut rhs = DenseMatrix::zeros(300, 3);
    for j in 0..3 {
        let col: Vec<f64> = (0..300).map(|i| base.rhs()[(i, 0)] * (j as f64 + 1.0) - i as f64 * 0.001).collect();
        rhs.set_col(j, &col);
    }
    let problem = LsProblem::new(base.a().clone(), rhs).unwrap();
    for strategy in [
        DirectionStrategy::QuasiNewton(QnParams::default()),
        DirectionStrategy::Newton { svd_tol: 0.0 },
        DirectionStrategy::Gradient,
    ] {
        let mut cfg = SolveConfig::new(SketchSpec::block_kaczmarz(300, 30).unwrap(), strategy);
        cfg.rule = fixed(60);
        if matches!(cfg.strategy, DirectionStrategy::Gradient) {
            cfg.schedule = StepSchedule::Harmonic { c: 0.002 };
        }
        let (x, _) = run_multi_rhs(&problem, &cfg, &[], 9).unwrap();
        for j in 0..3 {
            let col = run(&problem.column_problem(j).unwrap(), &cfg, &[], 9).unwrap();
            for i in 0..8 {
                assert!((x[(i, j)] - col.final_x[(i, 0)]).abs() <= 1e-12 * (1.0 + x[(i, j)].abs()));
            }
        }
    }
}

#[test]
fn quasi_newton_on_example_reaches_ls_solution() {
    let p = ExampleParams::new(1.0, 10.0).unwrap();
    let (a, b) = example_problem(p).unwrap();
    let xhat = example_solutions(p).unwrap().xhat;
    let problem = LsProblem::new(a, b).unwrap();
    let mut cfg = SolveConfig::new(
        SketchSpec::block_kaczmarz(3, 1).unwrap(),
        DirectionStrategy::QuasiNewton(QnParams::new(1e-5, 0.0, f64::INFINITY).unwrap()),
    );
    cfg.rule = fixed(200_000);
    cfg.trace_every = 0;
    let rep = run(&problem, &cfg, &[Reference::new("xhat", xhat)], 5).unwrap();
    assert!(rep.final_err("xhat").unwrap() < 5e-2, "{}", rep.final_err("xhat").unwrap());
}

#[test]
fn divergence_is_a_numerical_error() {
    let problem = generate_regression(100, 5, 1.0, 2).unwrap();
    let mut cfg = SolveConfig::new(SketchSpec::block_kaczmarz(100, 50).unwrap(), DirectionStrategy::Gradient);
    cfg.schedule = StepSchedule::Constant { c: 50.0 };
    cfg.rule = fixed(5000);
    assert!(matches!(run(&problem, &cfg, &[], 1), Err(Error::Numerical(_))));
}

#[test]
fn seeds_and_initial_guesses() {
    let problem = generate_regression(200, 6, 1.0, 6).unwrap();
    let mut cfg = SolveConfig::new(
        SketchSpec::sparse_random(200, 10, 0.1, None).unwrap(),
        DirectionStrategy::QuasiNewton(QnParams::default()),
    );
    cfg.rule = fixed(50);
    cfg.x0 = InitialGuess::Random;
    let a = run(&problem, &cfg, &[], 3).unwrap();
    let b = run(&problem, &cfg, &[], 3).unwrap();
    let c = run(&problem, &cfg, &[], 4).unwrap();
    assert_eq!(a.trace_csv(), b.trace_csv());
    assert_ne!(a.final_x, c.final_x);
    cfg.x0 = InitialGuess::Given(DenseMatrix::zeros(5, 1));
    assert!(run(&problem, &cfg, &[], 3).is_err());
}

#[test]
fn strict_adapted_lags_the_chain_by_one_sketch() {
    let problem = generate_regression(400, 10, 1.0, 7).unwrap();
    let xhat = problem.ls_solution().unwrap();
    let mut cfg = SolveConfig::new(
        SketchSpec::block_kaczmarz(400, 40).unwrap(),
        // With the lag the first step applies I/λ₁, so λ₁ must be on the scale of AᵀA.
        DirectionStrategy::QuasiNewton(QnParams::new(400.0, 0.0, f64::INFINITY).unwrap()),
    );
    cfg.rule = fixed(400);
    let refs = [Reference::new("xhat", xhat)];
    let plain = run(&problem, &cfg, &refs, 2).unwrap();
    cfg.strict_adapted = true;
    let strict = run(&problem, &cfg, &refs, 2).unwrap();
    assert_ne!(plain.final_x, strict.final_x);
    let (p, q) = (plain.final_err("xhat").unwrap(), strict.final_err("xhat").unwrap());
    assert!(p < 0.05 && q < 0.05, "{p} {q}");
}

#[test]
fn trace_csv_columns() {
    let problem = generate_regression(50, 3, 1.0, 1).unwrap();
    let mut cfg = SolveConfig::new(SketchSpec::uniform_columns(50, 5).unwrap(), DirectionStrategy::Newton { svd_tol: 0.0 });
    cfg.rule = fixed(20);
    cfg.trace_every = 5;
    let refs = [Reference::new("xhat", problem.ls_solution().unwrap())];
    let csv = run(&problem, &cfg, &refs, 1).unwrap().trace_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,alpha,sample_f,full_f,err_xhat,rows_touched_cum,qn_rejected");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    assert!(rows[3][3].is_empty() && !rows[4][3].is_empty());
    assert_eq!(rows[19][5], "100");
}
