//! Pipeline stages. Each stage writes CSV/text artifacts through [`Run`] and
//! records named checks; the exit status is the conjunction of the checks.

use crate::config::ExperimentConfig;
use crate::output::Run;
use anyhow::{Context, Result};
use levyop::cauchy::{
    regularity_report, solve_cauchy, CauchyProblem, Forcing, TimeProfile, Trajectory,
};
use levyop::process::{
    jump_count_test, martingale_experiment, mc_vs_pde, pde_bias, simulate_paths_with, InitialLaw,
    MartingaleOptions, SimRequest,
};
use levyop::resolvent::{generator_bound_scan, probe_basket, ResolventContext, ResolventOptions};
use levyop::symbol::{class_norm_detail, sector_and_ellipticity};
use levyop::{
    compute_symbol_with, validate_assumptions, Complex64, GridFunction, KernelSpec, SymbolField,
    TorusGrid,
};
use std::io::Write;
use std::time::Instant;

fn gaussian(grid: &TorusGrid, w: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp())
}

/// Executes one named pipeline.
pub fn execute(name: &str, cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let ctx = |stage: &str| format!("{name}: stage `{stage}` failed");
    match name {
        "validate" => validate(cfg, run).with_context(|| ctx("validate")),
        "symbol" => symbol(cfg, run).map(|_| ()).with_context(|| ctx("symbol")),
        "resolvent" => {
            let rc = context(cfg, run).with_context(|| ctx("symbol"))?;
            resolvent(cfg, run, &rc).with_context(|| ctx("resolvent"))
        }
        "cauchy" => {
            let rc = context(cfg, run).with_context(|| ctx("symbol"))?;
            cauchy(cfg, run, &rc)
                .map(|_| ())
                .with_context(|| ctx("cauchy"))
        }
        "simulate" => simulate(cfg, run).with_context(|| ctx("simulate")),
        "verify" => verify(cfg, run).with_context(|| ctx("verify")),
        "crosscheck" => crosscheck(cfg, run),
        "bench" => bench(cfg, run).with_context(|| ctx("bench")),
        other => anyhow::bail!("unknown pipeline `{other}`"),
    }
}

fn validate(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let spec = cfg.kernel()?;
    let grid = cfg.grid()?;
    let stride = (grid.len() / 32).max(1);
    let xs: Vec<[f64; 2]> = (0..grid.len())
        .step_by(stride)
        .map(|i| grid.point(i))
        .collect();
    let dirs: Vec<[f64; 2]> = if spec.n == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..6)
            .map(|k| (k as f64 * std::f64::consts::PI / 3.0 + 0.1).sin_cos())
            .map(|(s, c)| [c, s])
            .collect()
    };
    let ys: Vec<[f64; 2]> = (0..24)
        .map(|i| 1e-3 * (1.9e3f64).powf(i as f64 / 23.0))
        .flat_map(|r| dirs.iter().map(move |d| [r * d[0], r * d[1]]))
        .collect();
    let rep = validate_assumptions(&spec, &xs, &ys)?;
    run.text("validation.txt", &rep.to_text())?;
    run.csv("validation.csv", |w| {
        writeln!(w, "check,passed,margin,reduced_confidence")?;
        for c in &rep.checks {
            writeln!(
                w,
                "{},{},{:.6e},{}",
                c.name, c.passed, c.margin, c.reduced_confidence
            )?;
        }
        Ok(())
    })?;
    for c in &rep.checks {
        run.check(&format!("assumption {}", c.name), c.passed, &c.detail);
    }
    Ok(())
}

fn symbol(
    cfg: &ExperimentConfig,
    run: &mut Run,
) -> Result<(SymbolField, Option<levyop::symbol::SectorReport>)> {
    let spec = cfg.kernel()?;
    let grid = cfg.grid()?;
    let p = compute_symbol_with(&spec, &grid, &cfg.symbol_options())?;
    run.csv("symbol.csv", |w| p.write_csv(w, cfg.symbol.csv_stride))?;
    let norm = class_norm_detail(&p, spec.alpha)?;
    run.csv("symbol_class_norm.csv", |w| {
        writeln!(w, "order,value")?;
        for (k, v) in norm.per_order.iter().enumerate() {
            writeln!(w, "{k},{v:.10e}")?;
        }
        Ok(())
    })?;
    run.check(
        "symbol class norm finite",
        norm.value.is_finite(),
        &format!("norm {:.6e}", norm.value),
    );
    let sector = match sector_and_ellipticity(&p, spec.alpha) {
        Ok(s) => {
            run.text("sector.txt", &s.to_text())?;
            Some(s)
        }
        Err(e) if !matches!(spec.k1, levyop::K1Family::StableLike { .. }) => {
            run.text("sector.txt", &format!("unavailable: {e}\n"))?;
            None
        }
        Err(e) => return Err(e.into()),
    };
    Ok((p, sector))
}

fn context(cfg: &ExperimentConfig, run: &mut Run) -> Result<ResolventContext> {
    let spec = cfg.kernel()?;
    let (p, sector) = symbol(cfg, run)?;
    let sector = sector.context("no sector for this kernel")?;
    Ok(ResolventContext::from_parts(&spec, p, sector)?)
}

fn resolvent(cfg: &ExperimentConfig, run: &mut Run, ctx: &ResolventContext) -> Result<()> {
    let rc = &cfg.resolvent;
    let opts = ResolventOptions {
        tol: rc.tol,
        ..Default::default()
    };
    let probes = probe_basket(ctx.grid());
    let aps = cfg.alpha_primes(&ctx.spec);
    let mut angles = rc.angles.clone();
    if let Some(off) = rc.edge_offset {
        angles.push(ctx.sector.delta_prime - off);
    }
    for (i, &angle) in angles.iter().enumerate() {
        let scan = generator_bound_scan(ctx, &rc.factors, angle, &aps, rc.s, &probes, opts)?;
        run.csv(&format!("resolvent_scan_{i}.csv"), |w| scan.write_csv(w))?;
        for (j, ap) in aps.iter().enumerate() {
            let d = (scan.slopes[j] - scan.predicted[j]).abs();
            run.check(
                &format!("resolvent slope angle {angle:.4} alpha' {ap}"),
                d <= cfg.checks.slope_tol,
                &format!(
                    "slope {:.4}, predicted {:.4}",
                    scan.slopes[j], scan.predicted[j]
                ),
            );
        }
    }
    let res = ctx.at(Complex64::new(rc.defect_factor * ctx.r(), 0.0), opts)?;
    let mut rows = vec![];
    for (name, f) in &probes {
        let sol = res.solve(f)?;
        let defect = res.defect(&sol.u, f)? / f.max_abs();
        rows.push((name.clone(), sol.iterations, defect));
    }
    run.csv("resolvent_defect.csv", |w| {
        writeln!(w, "probe,iterations,relative_defect")?;
        for (n, k, d) in &rows {
            writeln!(w, "{n},{k},{d:.6e}")?;
        }
        Ok(())
    })?;
    let iters = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let defect = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    run.check(
        "Neumann iterations",
        iters <= cfg.checks.max_iterations,
        &format!("max {iters} at lambda = {} R", rc.defect_factor),
    );
    run.check(
        "resolvent defect",
        defect <= cfg.checks.max_defect,
        &format!("max relative defect {defect:.3e}"),
    );
    Ok(())
}

fn forcing(cfg: &ExperimentConfig, grid: &TorusGrid) -> Forcing {
    let c = &cfg.cauchy;
    let space = match c.forcing.as_str() {
        "mode" => GridFunction::from_fn(grid, |x| x[0].cos()),
        _ => gaussian(grid, c.width),
    };
    let time = match c.time.as_str() {
        "constant" => TimeProfile::Constant(1.0),
        "sin" => TimeProfile::Sin { omega: c.omega },
        _ => TimeProfile::Ramp { t1: c.t1 },
    };
    Forcing::separable(time, space)
}

fn write_trajectory(
    cfg: &ExperimentConfig,
    run: &mut Run,
    name: &str,
    tr: &Trajectory,
) -> Result<()> {
    let stride = cfg.cauchy.csv_stride.max(1);
    let rows = tr.times.len();
    // Keep at most 33 time slices.
    let keep = ((rows - 1) / 32).max(1);
    let sub = Trajectory {
        times: tr.times.iter().step_by(keep).copied().collect(),
        states: tr.states.iter().step_by(keep).cloned().collect(),
        defects: tr.defects.iter().step_by(keep).copied().collect(),
        iterations: tr.iterations.iter().step_by(keep).copied().collect(),
        forcing_sup: tr.forcing_sup,
    };
    run.csv(name, |w| sub.write_csv(w, stride))
}

fn cauchy(cfg: &ExperimentConfig, run: &mut Run, ctx: &ResolventContext) -> Result<Trajectory> {
    let c = &cfg.cauchy;
    let mut prob = CauchyProblem::new(forcing(cfg, ctx.grid()), c.horizon, c.steps);
    prob.zero_start = c.zero_start;
    prob.resolvent.tol = cfg.resolvent.tol;
    let tr = solve_cauchy(ctx, &prob)?;
    write_trajectory(cfg, run, "cauchy_trajectory.csv", &tr)?;
    let reg = regularity_report(&tr, c.s, ctx.spec.alpha, c.theta)?;
    run.csv("cauchy_regularity.csv", |w| {
        writeln!(w, "t,norm_s,norm_s_alpha")?;
        for ((t, a), b) in reg.times.iter().zip(&reg.norm_s).zip(&reg.norm_s_alpha) {
            writeln!(w, "{t:.10e},{a:.10e},{b:.10e}")?;
        }
        Ok(())
    })?;
    let max_defect = tr.defects.iter().copied().fold(0.0, f64::max);
    if c.forcing == "bump" {
        let ratio = tr.min_value() / tr.forcing_sup.max(1e-300);
        run.check(
            "Cauchy positivity",
            ratio >= -cfg.checks.positivity_tol,
            &format!("min u / max f = {ratio:.3e}"),
        );
    }
    run.check(
        "Cauchy regularity finite",
        reg.max_norm_s_alpha.is_finite() && reg.time_quotient.is_finite(),
        &format!(
            "max C^(s+alpha) norm {:.4e}, time quotient {:.4e}, max step defect {max_defect:.2e}",
            reg.max_norm_s_alpha, reg.time_quotient
        ),
    );
    Ok(tr)
}

fn simulate(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let spec = cfg.kernel()?;
    let s = &cfg.simulate;
    let req = SimRequest {
        checkpoints: s.checkpoints.clone(),
        integrands: vec![],
        record_paths: s.record_paths,
    };
    let ens = simulate_paths_with(
        &spec,
        &cfg.initial()?,
        s.horizon,
        &cfg.scheme(&spec),
        s.n_paths,
        s.seed,
        &req,
    )?;
    run.csv("ensemble.csv", |w| ens.write_summary_csv(w))?;
    if s.record_paths {
        run.csv("ensemble_events.csv", |w| ens.write_events(w))?;
    }
    run.csv("ensemble_checkpoints.csv", |w| {
        writeln!(w, "t,mean_x1,mean_x2")?;
        for &t in &ens.checkpoints {
            let st = ens.states_at(t).map_err(std::io::Error::other)?;
            let m = st.len().max(1) as f64;
            let (a, b) = st
                .iter()
                .fold((0.0, 0.0), |acc, x| (acc.0 + x[0], acc.1 + x[1]));
            writeln!(w, "{t},{:.10e},{:.10e}", a / m, b / m)?;
        }
        Ok(())
    })?;
    run.check(
        "thinning acceptance count",
        ens.acceptance_z() <= cfg.checks.acceptance_z,
        &format!(
            "acceptance rate {:.4}, z {:.2}",
            ens.acceptance_rate(),
            ens.acceptance_z()
        ),
    );
    run.check(
        "no excluded paths",
        ens.excluded == 0,
        &format!("{} excluded", ens.excluded),
    );
    if spec.is_x_independent() && ens.excluded == 0 {
        let jc = jump_count_test(&ens, cfg.checks.jump_count_level)?;
        run.check(
            "jump-count law",
            jc.pass,
            &format!(
                "mean {:.4} vs {:.4}, chi2 {:.2} on {} dof, p {:.3}",
                jc.sample_mean, jc.expected_mean, jc.chi2, jc.dof, jc.p_value
            ),
        );
    }
    Ok(())
}

fn verify(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let spec = cfg.kernel()?;
    let grid = cfg.grid()?;
    let s = &cfg.simulate;
    let phi = gaussian(&grid, s.test_width);
    let (_, rep) = martingale_experiment(
        &spec,
        &cfg.initial()?,
        s.horizon,
        &cfg.scheme(&spec),
        s.n_paths,
        s.seed,
        &phi,
        &s.checkpoints,
        MartingaleOptions::default(),
    )?;
    run.csv("martingale.csv", |w| rep.write_csv(w))?;
    run.check(
        "martingale residual",
        rep.max_z() <= cfg.checks.martingale_z,
        &format!("max |z| {:.3} over {} paths", rep.max_z(), rep.n_paths),
    );
    run.check(
        "perturbed generator detected",
        rep.power_z > cfg.checks.power_z,
        &format!("z {:.2}", rep.power_z),
    );
    Ok(())
}

fn crosscheck(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let stage = |s: &str| format!("crosscheck: stage `{s}` failed");
    let spec: KernelSpec = cfg.kernel()?;
    let ctx = context(cfg, run).with_context(|| stage("symbol"))?;
    resolvent(cfg, run, &ctx).with_context(|| stage("resolvent"))?;
    let s = &cfg.simulate;
    let t = s.horizon;
    let psi = gaussian(ctx.grid(), s.test_width);
    let pde = |steps: usize| -> Result<Trajectory> {
        let mut prob = CauchyProblem::new(Forcing::zero(), t, steps);
        prob.initial = Some(psi.clone());
        prob.resolvent.tol = cfg.resolvent.tol;
        Ok(solve_cauchy(&ctx, &prob)?)
    };
    let fine = pde(cfg.cauchy.steps).with_context(|| stage("cauchy"))?;
    let coarse = pde((cfg.cauchy.steps / 2).max(1)).with_context(|| stage("cauchy"))?;
    write_trajectory(cfg, run, "crosscheck_pde.csv", &fine)?;
    let bias =
        pde_bias(&spec, &fine, Some(&coarse), t, s.epsilon).with_context(|| stage("cauchy"))?;
    let probes = cfg.probes()?;
    let req = SimRequest {
        checkpoints: vec![t],
        integrands: vec![],
        record_paths: false,
    };
    let ens = simulate_paths_with(
        &spec,
        &InitialLaw::Points(probes.clone()),
        t,
        &cfg.scheme(&spec),
        s.n_paths * probes.len(),
        s.seed,
        &req,
    )
    .with_context(|| stage("simulate"))?;
    let tab = mc_vs_pde(&ens, &psi, t, &fine, Some(&bias)).with_context(|| stage("mc_vs_pde"))?;
    run.csv("mc_vs_pde.csv", |w| tab.write_csv(w))?;
    run.check(
        "Monte Carlo within 3 SE + bias",
        tab.all_pass(),
        &format!(
            "{} of {} probes",
            tab.rows.iter().filter(|r| r.pass).count(),
            tab.rows.len()
        ),
    );
    run.check(
        "Monte Carlo versus PDE",
        tab.max_error() <= cfg.checks.mc_pde_tol,
        &format!("max error {:.3e}", tab.max_error()),
    );
    Ok(())
}

/// Timings go to the manifest only, so CSV payloads stay deterministic.
fn bench(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let spec = cfg.kernel()?;
    let grid = cfg.grid()?;
    let t0 = Instant::now();
    let p = compute_symbol_with(&spec, &grid, &cfg.symbol_options())?;
    run.timing("symbol", t0.elapsed());
    let t0 = Instant::now();
    let sector = sector_and_ellipticity(&p, spec.alpha)?;
    let ctx = ResolventContext::from_parts(&spec, p, sector)?;
    run.timing("sector", t0.elapsed());
    let f = gaussian(&grid, cfg.cauchy.width);
    let t0 = Instant::now();
    let res = ctx.at(
        Complex64::new(cfg.resolvent.defect_factor * ctx.r(), 0.0),
        ResolventOptions::default(),
    )?;
    res.solve(&f)?;
    run.timing("resolvent_solve", t0.elapsed());
    let t0 = Instant::now();
    let prob = CauchyProblem::new(forcing(cfg, &grid), cfg.cauchy.horizon, cfg.cauchy.steps);
    solve_cauchy(&ctx, &prob)?;
    run.timing("cauchy", t0.elapsed());
    let t0 = Instant::now();
    let s = &cfg.simulate;
    let n = s.n_paths.min(10_000);
    levyop::simulate_paths(
        &spec,
        &cfg.initial()?,
        s.horizon,
        &cfg.scheme(&spec),
        n,
        s.seed,
    )?;
    run.timing(&format!("simulate_{n}_paths"), t0.elapsed());
    Ok(())
}
