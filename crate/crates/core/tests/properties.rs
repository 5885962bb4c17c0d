//! Structural invariants as property tests on small grids.

use levyop::cauchy::{solve_cauchy, CauchyProblem, Forcing, TimeProfile};
use levyop::process::{d_uc, gamma_k, simulate_paths, InitialLaw, JumpEvent, SimScheme, StepPath};
use levyop::psdo::{apply_xform, apply_xform_direct, apply_yform, pairing};
use levyop::resolvent::{ResolventContext, ResolventOptions};
use levyop::*;
use proptest::prelude::*;
use std::sync::OnceLock;

type C = Complex64;

fn lacunary() -> Coefficient {
    Coefficient::Lacunary {
        mean: 1.0,
        spread: 0.25,
        tau: 0.5,
        octaves: 4,
        ell: 1.0,
        phase: 0.3,
    }
}

fn grid() -> TorusGrid {
    TorusGrid::new(1, 1.0, 64).unwrap()
}

fn holder_ctx() -> &'static ResolventContext {
    static CTX: OnceLock<ResolventContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, lacunary()).unwrap();
        ResolventContext::new(&spec, &grid(), &SymbolOptions::default()).unwrap()
    })
}

fn constant_symbol() -> &'static SymbolField {
    static P: OnceLock<SymbolField> = OnceLock::new();
    P.get_or_init(|| {
        let spec = KernelSpec::stable_like(1, 1.2, 0.5, Coefficient::Constant(1.3)).unwrap();
        compute_symbol(&spec, &grid()).unwrap()
    })
}

/// Real trigonometric polynomial of degree < 8 from coefficient pairs.
fn trig(coef: &[(f64, f64)]) -> GridFunction {
    GridFunction::from_fn(&grid(), |x| {
        coef.iter()
            .enumerate()
            .map(|(k, (a, b))| a * (k as f64 * x[0]).cos() + b * (k as f64 * x[0]).sin())
            .sum()
    })
}

fn coefs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8)
}

fn close(a: &GridFunction, b: &GridFunction, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol * (1.0 + a.max_abs().max(b.max_abs()))
}

/// Step path from sorted jump times and sizes.
fn step_path(jumps: &[(f64, f64)], horizon: f64) -> StepPath {
    let mut js: Vec<(f64, f64)> = jumps.to_vec();
    js.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut x = 0.0;
    let events = js
        .iter()
        .map(|&(t, d)| {
            let ev = JumpEvent {
                time: t,
                pre: [x, 0.0],
                post: [x + d, 0.0],
            };
            x += d;
            ev
        })
        .collect();
    StepPath {
        x0: [0.0; 2],
        events,
        horizon,
        terminal: [x, 0.0],
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn xform_is_linear(f in coefs(), g in coefs(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let p = &holder_ctx().p;
        let (f, g) = (trig(&f), trig(&g));
        let lhs = apply_xform(p, &f.scaled(C::new(a, 0.0)).axpy(C::new(b, 0.0), &g)).unwrap();
        let rhs = apply_xform(p, &f).unwrap().scaled(C::new(a, 0.0)).axpy(C::new(b, 0.0), &apply_xform(p, &g).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-11));
    }

    #[test]
    fn separable_and_direct_xform_agree(f in coefs()) {
        let p = &holder_ctx().p;
        let f = trig(&f);
        prop_assert!(close(&apply_xform(p, &f).unwrap(), &apply_xform_direct(p, &f).unwrap(), 1e-11));
    }

    #[test]
    fn x_and_y_forms_agree_for_constant_coefficients(f in coefs()) {
        let p = constant_symbol();
        let f = trig(&f);
        prop_assert!(close(&apply_xform(p, &f).unwrap(), &apply_yform(p, &f).unwrap(), 1e-11));
    }

    #[test]
    fn yform_of_reflected_symbol_is_the_transpose(f in coefs(), g in coefs()) {
        let p = &holder_ctx().p;
        let (f, g) = (trig(&f), trig(&g));
        let lhs = pairing(&apply_xform(p, &f).unwrap(), &g);
        let rhs = pairing(&f, &apply_yform(&p.reflected(), &g).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn symmetric_kernel_has_real_nonpositive_symbol(i in 0usize..64, k in 0usize..64) {
        let v = holder_ctx().p.value(i, k);
        prop_assert!(v.im.abs() <= 1e-9 * (1.0 + v.norm()));
        prop_assert!(v.re <= 1e-9);
    }

    #[test]
    fn first_resolvent_identity(f in coefs(), a in 2.0..12.0f64, b in 2.0..12.0f64) {
        let ctx = holder_ctx();
        let (l, m) = (C::new(a * ctx.r(), 0.0), C::new(b * ctx.r(), 0.0));
        let f = trig(&f);
        let rl = ctx.at(l, ResolventOptions::default()).unwrap();
        let rm = ctx.at(m, ResolventOptions::default()).unwrap();
        let x = rl.solve(&f).unwrap().u;
        let y = rm.solve(&f).unwrap().u;
        let xy = rl.solve(&y).unwrap().u;
        let r = x.sub(&y).axpy(-(m - l), &xy);
        prop_assert!(r.max_abs() <= 1e-8 * (1.0 + f.max_abs()));
    }

    #[test]
    fn cauchy_solution_is_linear_in_the_forcing(f in coefs(), c in -3.0..3.0f64) {
        let ctx = holder_ctx();
        let f = trig(&f);
        let solve = |g: &GridFunction| {
            solve_cauchy(ctx, &CauchyProblem::new(Forcing::separable(TimeProfile::Ramp { t1: 0.1 }, g.clone()), 0.25, 32)).unwrap()
        };
        let a = solve(&f.scaled(C::new(c, 0.0)));
        let b = solve(&f);
        prop_assert!(close(a.last(), &b.last().scaled(C::new(c, 0.0)), 1e-9));
    }

    #[test]
    fn cauchy_comparison_principle(w1 in 0.2..0.8f64, shift in 0.0..1.0f64) {
        let ctx = holder_ctx();
        let g = grid();
        let small = GridFunction::from_fn(&g, |x| (-x[0] * x[0] / (w1 * w1)).exp());
        let big = GridFunction::from_fn(&g, |x| (-x[0] * x[0] / (w1 * w1)).exp() + shift * (1.0 + x[0].cos()));
        let solve = |h: &GridFunction| {
            solve_cauchy(ctx, &CauchyProblem::new(Forcing::separable(TimeProfile::Ramp { t1: 0.1 }, h.clone()), 0.25, 32)).unwrap()
        };
        let (a, b) = (solve(&small), solve(&big));
        let d = b.last().sub(a.last());
        prop_assert!(d.min_re() >= -1e-10 * b.forcing_sup);
    }

    #[test]
    fn gamma_is_nondecreasing_in_rho(jumps in prop::collection::vec((0.01..1.99f64, -1.0..1.0f64), 0..6)) {
        let p = step_path(&jumps, 2.0);
        let rhos = [0.01, 0.05, 0.1, 0.3, 0.6, 1.0, 1.5];
        let gs: Vec<f64> = rhos.iter().map(|&r| gamma_k(&p, 2.0, r).unwrap()).collect();
        prop_assert!(gs.iter().all(|&g| g >= 0.0));
        prop_assert!(gs.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{gs:?}");
    }

    #[test]
    fn d_uc_is_a_metric(
        a in prop::collection::vec((0.01..2.9f64, -1.0..1.0f64), 0..4),
        b in prop::collection::vec((0.01..2.9f64, -1.0..1.0f64), 0..4),
        c in prop::collection::vec((0.01..2.9f64, -1.0..1.0f64), 0..4),
    ) {
        let (pa, pb, pc) = (step_path(&a, 3.0), step_path(&b, 3.0), step_path(&c, 3.0));
        let ab = d_uc(&pa, &pb).0;
        prop_assert!(d_uc(&pa, &pa).0 == 0.0);
        prop_assert!((ab - d_uc(&pb, &pa).0).abs() <= 1e-15);
        prop_assert!(ab <= d_uc(&pa, &pc).0 + d_uc(&pc, &pb).0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, .. ProptestConfig::default() })]

    #[test]
    fn simulation_is_seed_deterministic_and_thread_independent(seed in any::<u64>(), eps in 0.05..0.5f64) {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, lacunary()).unwrap();
        let scheme = SimScheme::for_spec(&spec, eps);
        let init = InitialLaw::Point([0.2, 0.0]);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_paths(&spec, &init, 0.3, &scheme, 64, seed).unwrap())
        };
        let (a, b) = (run(1), run(3));
        prop_assert_eq!(&a.states, &b.states);
        prop_assert_eq!(&a.jumps, &b.jumps);
        let c = simulate_paths(&spec, &init, 0.3, &scheme, 64, seed.wrapping_add(1)).unwrap();
        prop_assert!(a.states != c.states || a.jumps.iter().all(|&j| j == 0));
    }
}
