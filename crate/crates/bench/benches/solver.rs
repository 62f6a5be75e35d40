use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use snapcube::{solve, SolverConfig};
use snapcube_bench::{problem, SIZES};

/// One outer ADMM iteration, including the baseline initialisation.
fn iteration(c: &mut Criterion) {
    let mut g = c.benchmark_group("admm");
    g.sample_size(10);
    let cfg = SolverConfig {
        max_outer_iters: 1,
        tolerance: 0.0,
        ..SolverConfig::default()
    };
    for (nx, ny, nl) in SIZES {
        let (op, _, y) = problem(nx, ny, nl);
        g.bench_with_input(BenchmarkId::new("one_iteration", format!("{nx}x{ny}x{nl}")), &y, |b, y| {
            b.iter(|| solve(&op, black_box(y.view()), &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, iteration);
criterion_main!(benches);
