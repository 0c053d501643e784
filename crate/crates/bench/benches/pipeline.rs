use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use linmhd_bench::Fixture;
use linmhd_core::assembly::solve_system;
use linmhd_core::cases::Test1;
use linmhd_core::norms::{compute_errors, DiscreteFields};
use linmhd_core::solver::LuFactors;

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("cube n=2");
    g.sample_size(10);
    for k in [1, 2] {
        let fx = Fixture::cube(2, k);
        let sys = fx.system();
        g.bench_function(format!("assemble k={k}"), |b| b.iter(|| black_box(fx.system())));
        g.bench_function(format!("factorize k={k}"), |b| {
            b.iter(|| black_box(LuFactors::factorize(&sys.matrix).unwrap()))
        });
        let sol = solve_system(&sys).unwrap();
        g.bench_function(format!("errors k={k}"), |b| {
            b.iter(|| {
                let f = DiscreteFields { u: &sol.u, p: &sol.p, b: &sol.b };
                black_box(compute_errors(&fx.disc, &fx.params, &Test1, f, 2 * k + 6).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
