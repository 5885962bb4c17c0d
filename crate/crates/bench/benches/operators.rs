use criterion::{criterion_group, criterion_main, Criterion};
use levyop::cauchy::{solve_cauchy, CauchyProblem, Forcing, TimeProfile};
use levyop::process::{simulate_paths, InitialLaw, SimScheme};
use levyop::psdo::apply_xform;
use levyop::resolvent::{ResolventContext, ResolventOptions};
use levyop::{compute_symbol, Complex64, SymbolOptions};
use levyop_bench::{bump, grid, holder_spec};
use std::hint::black_box;

fn symbol(c: &mut Criterion) {
    let spec = holder_spec(1.5);
    let g = grid(256);
    c.bench_function("symbol N=256", |b| {
        b.iter(|| compute_symbol(black_box(&spec), &g).unwrap())
    });
}

fn operators(c: &mut Criterion) {
    let spec = holder_spec(1.5);
    let g = grid(256);
    let ctx = ResolventContext::new(&spec, &g, &SymbolOptions::default()).unwrap();
    let f = bump(&g, 0.5);
    c.bench_function("x-form apply N=256", |b| {
        b.iter(|| apply_xform(&ctx.p, black_box(&f)).unwrap())
    });
    let res = ctx
        .at(
            Complex64::new(8.0 * ctx.r(), 0.0),
            ResolventOptions::default(),
        )
        .unwrap();
    c.bench_function("Neumann solve at 8R", |b| {
        b.iter(|| res.solve(black_box(&f)).unwrap())
    });
    let prob = CauchyProblem::new(
        Forcing::separable(TimeProfile::Ramp { t1: 0.25 }, f.clone()),
        1.0,
        64,
    );
    c.bench_function("backward Euler 64 steps", |b| {
        b.iter(|| solve_cauchy(&ctx, black_box(&prob)).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let spec = holder_spec(1.5);
    let scheme = SimScheme::for_spec(&spec, 0.05);
    let init = InitialLaw::Point([0.0; 2]);
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("2000 paths T=1 eps=0.05", |b| {
        b.iter(|| simulate_paths(&spec, &init, 1.0, &scheme, 2000, black_box(7)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, symbol, operators, simulation);
criterion_main!(benches);
