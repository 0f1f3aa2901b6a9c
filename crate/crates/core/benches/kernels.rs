//! Parallel vs. sequential kernels.
//!
//! Benchmark ids are identical in both builds so criterion can compare them:
//!
//! ```text
//! cargo bench -p sqnls --no-default-features --bench kernels -- --save-baseline sequential
//! cargo bench -p sqnls --bench kernels -- --baseline sequential
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sqnls::analysis::estimate_P_monte_carlo;
use sqnls::sketch::empirical_moment_deviation;
use sqnls::{generate_regression, run_seeds, DirectionStrategy, QnParams, SketchSpec, SolveConfig};

fn mode() -> &'static str {
    if sqnls::par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn kernels(c: &mut Criterion) {
    eprintln!("kernels bench: {} build", mode());
    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);

    let problem = generate_regression(2000, 200, 1.0, 1).unwrap();
    let a = problem.a().clone();
    g.bench_function("gram_2000x200", |b| b.iter(|| black_box(a.t_matmul(&a).unwrap())));

    let spec = SketchSpec::sparse_rademacher(40, 8, 6).unwrap();
    g.bench_function("moment_deviation_50k", |b| {
        b.iter(|| black_box(empirical_moment_deviation(&spec, 50_000, 2).unwrap()))
    });

    let small = generate_regression(60, 4, 1.0, 3).unwrap();
    let kz = SketchSpec::uniform_columns(60, 5).unwrap();
    g.bench_function("p_monte_carlo_20k", |b| {
        b.iter(|| black_box(estimate_P_monte_carlo(&kz, small.a(), 20_000, 4, 0.0).unwrap()))
    });

    let reg = generate_regression(2000, 50, 1.0, 5).unwrap();
    let mut cfg = SolveConfig::new(
        SketchSpec::block_kaczmarz(2000, 100).unwrap(),
        DirectionStrategy::QuasiNewton(QnParams::default()),
    );
    cfg.rule.max_iters = 100;
    cfg.rule.tol = f64::MIN_POSITIVE;
    let seeds: Vec<u64> = (0..8).collect();
    g.bench_function("sqn_8_seeds_100_iters", |b| {
        b.iter(|| black_box(run_seeds(&reg, &cfg, &[], &seeds)))
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
