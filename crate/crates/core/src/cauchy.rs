//! `∂_t u - Lu = f`, `u(0) = u₀` by backward Euler: each step is one
//! resolvent solve at `λ = 1/Δt`.

use crate::error::{ensure, Error, Result};
use crate::grid::{build_dyadic_partition, holder_zygmund_norm, GridFunction};
use crate::resolvent::{ResolventContext, ResolventOptions};
use num_complex::Complex64;
use std::fmt;
use std::sync::Arc;

type C = Complex64;

/// Time factor of a separable forcing term.
#[derive(Clone)]
pub enum TimeProfile {
    Constant(f64),
    /// `sin(ω t)`.
    Sin {
        omega: f64,
    },
    /// `min(t / t1, 1)`.
    Ramp {
        t1: f64,
    },
    /// Smooth bump supported in `(a, b)`, peak value 1.
    Bump {
        a: f64,
        b: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Constant(c) => write!(f, "Constant({c})"),
            TimeProfile::Sin { omega } => write!(f, "Sin({omega})"),
            TimeProfile::Ramp { t1 } => write!(f, "Ramp({t1})"),
            TimeProfile::Bump { a, b } => write!(f, "Bump({a}, {b})"),
            TimeProfile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant(c) => *c,
            TimeProfile::Sin { omega } => (omega * t).sin(),
            TimeProfile::Ramp { t1 } => (t / t1).clamp(0.0, 1.0),
            TimeProfile::Bump { a, b } => {
                if t <= *a || t >= *b {
                    return 0.0;
                }
                let s = (2.0 * t - a - b) / (b - a);
                (1.0 - 1.0 / (1.0 - s * s)).exp()
            }
            TimeProfile::Custom(g) => g(t),
        }
    }
}

/// `f(t, x) = Σ_i φ_i(t) ψ_i(x)`.
#[derive(Debug, Clone, Default)]
pub struct Forcing {
    pub terms: Vec<(TimeProfile, GridFunction)>,
}

impl Forcing {
    pub fn zero() -> Self {
        Self { terms: vec![] }
    }

    pub fn separable(time: TimeProfile, space: GridFunction) -> Self {
        Self {
            terms: vec![(time, space)],
        }
    }

    pub fn at(&self, t: f64, like: &GridFunction) -> GridFunction {
        self.terms
            .iter()
            .fold(GridFunction::zeros(&like.grid), |acc, (phi, psi)| {
                acc.axpy(C::new(phi.eval(t), 0.0), psi)
            })
    }

    /// `-f(T - t, ·)`, the forcing of the time-reversed backward problem.
    pub fn reversed(&self, horizon: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(phi, psi)| {
                let phi = phi.clone();
                let g: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
                    Arc::new(move |t| -phi.eval(horizon - t));
                (TimeProfile::Custom(g), psi.clone())
            })
            .collect();
        Self { terms }
    }
}

#[derive(Debug, Clone)]
pub struct CauchyProblem {
    pub forcing: Forcing,
    /// Initial data; zero when absent.
    pub initial: Option<GridFunction>,
    pub horizon: f64,
    pub steps: usize,
    /// Requires `f(0, ·) = 0` and zero initial data.
    pub zero_start: bool,
    /// Largest accepted per-step defect relative to `max(‖f‖_∞, ‖u^m‖_∞/Δt)`.
    pub defect_tol: f64,
    pub resolvent: ResolventOptions,
}

impl CauchyProblem {
    pub fn new(forcing: Forcing, horizon: f64, steps: usize) -> Self {
        Self {
            forcing,
            initial: None,
            horizon,
            steps,
            zero_start: false,
            defect_tol: 1e-9,
            resolvent: ResolventOptions::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    /// Absolute per-step defects (entry 0 is zero).
    pub defects: Vec<f64>,
    /// Neumann depth per step.
    pub iterations: Vec<usize>,
    /// Largest `‖f(t_m)‖_∞` seen.
    pub forcing_sup: f64,
}

impl Trajectory {
    pub fn last(&self) -> &GridFunction {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn min_value(&self) -> f64 {
        self.states
            .iter()
            .map(|u| u.min_re())
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation in time.
    pub fn at(&self, t: f64) -> GridFunction {
        let dt = self.times[1] - self.times[0];
        let s = ((t - self.times[0]) / dt).clamp(0.0, (self.times.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.times.len() - 2);
        let w = s - i as f64;
        self.states[i]
            .scaled(C::new(1.0 - w, 0.0))
            .axpy(C::new(w, 0.0), &self.states[i + 1])
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, x_stride: usize) -> std::io::Result<()> {
        writeln!(w, "t,x1,x2,u_re,u_im")?;
        let stride = x_stride.max(1);
        for (t, u) in self.times.iter().zip(&self.states) {
            for idx in (0..u.grid.len()).step_by(stride) {
                let x = u.grid.point(idx);
                writeln!(
                    w,
                    "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    x[0], x[1], u.values[idx].re, u.values[idx].im
                )?;
            }
        }
        Ok(())
    }
}

/// Backward Euler `u^{m+1} = (λ - L)^{-1}[λ u^m + f(t_{m+1})]`, `λ = 1/Δt`.
pub fn solve_cauchy(ctx: &ResolventContext, prob: &CauchyProblem) -> Result<Trajectory> {
    ensure!(
        prob.horizon > 0.0 && prob.horizon.is_finite(),
        Parameter,
        "horizon must be positive"
    );
    ensure!(prob.steps >= 1, Parameter, "need at least one step");
    let grid = ctx.grid();
    let dt = prob.dt();
    let lambda = 1.0 / dt;
    ensure!(
        lambda >= ctx.r(),
        Precondition,
        "1/dt = {lambda:.4e} is below the admissible R = {:.4e}; use at least {} steps",
        ctx.r(),
        (prob.horizon * ctx.r()).ceil() as usize
    );
    for (_, psi) in &prob.forcing.terms {
        ensure!(
            psi.grid == *grid,
            Parameter,
            "forcing lives on a different grid"
        );
    }
    let zero = GridFunction::zeros(grid);
    let u0 = prob.initial.clone().unwrap_or_else(|| zero.clone());
    ensure!(
        u0.grid == *grid,
        Parameter,
        "initial data lives on a different grid"
    );
    if prob.zero_start {
        ensure!(
            u0.max_abs() == 0.0,
            Precondition,
            "zero-start contract requires zero initial data"
        );
        let f0 = prob.forcing.at(0.0, &zero).max_abs();
        ensure!(
            f0 <= 1e-14,
            Precondition,
            "zero-start contract requires f(0) = 0, found sup {f0:.3e}"
        );
    }
    let res = ctx.at(C::new(lambda, 0.0), prob.resolvent).map_err(|e| match e {
        Error::Divergence(m) => Error::Divergence(format!(
            "{m}; the step size is not the cause (lambda = 1/dt grows as dt shrinks), check the kernel and sector"
        )),
        other => other,
    })?;
    let mut times = vec![0.0];
    let mut states = vec![u0];
    let mut defects = vec![0.0];
    let mut iterations = vec![0];
    let mut forcing_sup = 0.0f64;
    for m in 0..prob.steps {
        let t = (m + 1) as f64 * dt;
        let f = prob.forcing.at(t, &zero);
        forcing_sup = forcing_sup.max(f.max_abs());
        let prev = states.last().unwrap();
        let rhs = f.axpy(C::new(lambda, 0.0), prev);
        let sol = res.solve(&rhs)?;
        let u = sol.u;
        let lu = ctx.apply_l(&u)?;
        let d = u
            .sub(prev)
            .scaled(C::new(lambda, 0.0))
            .sub(&lu)
            .sub(&f)
            .max_abs();
        let scale = f
            .max_abs()
            .max(prev.max_abs() * lambda)
            .max(f64::MIN_POSITIVE);
        if d > prob.defect_tol * scale {
            return Err(Error::StepFailure(format!(
                "step {} (t = {t:.4e}): defect {d:.3e} above tolerance",
                m + 1
            )));
        }
        times.push(t);
        states.push(u);
        defects.push(d);
        iterations.push(sol.iterations);
    }
    Ok(Trajectory {
        times,
        states,
        defects,
        iterations,
        forcing_sup,
    })
}

/// Terminal-value problem `∂_t v + Lv = φ(t)ψ`, `v(T) = 0`, through
/// `w(t) = v(T - t)`, which solves `∂_t w - Lw = -φ(T - t)ψ`, `w(0) = 0`.
/// The returned states are ordered in forward time, so `states[M] = 0`.
pub fn solve_backward(
    ctx: &ResolventContext,
    phi: TimeProfile,
    psi: &GridFunction,
    horizon: f64,
    steps: usize,
) -> Result<Trajectory> {
    let forcing = Forcing::separable(phi, psi.clone()).reversed(horizon);
    let prob = CauchyProblem::new(forcing, horizon, steps);
    let w = solve_cauchy(ctx, &prob)?;
    let mut states = w.states;
    states.reverse();
    let mut defects = w.defects;
    defects.reverse();
    let mut iterations = w.iterations;
    iterations.reverse();
    Ok(Trajectory {
        times: w.times,
        states,
        defects,
        iterations,
        forcing_sup: w.forcing_sup,
    })
}

/// `∫_0^T φ(s) u(s) ds` by the right-endpoint rule matching backward Euler.
pub fn time_integral(traj: &Trajectory, phi: &TimeProfile) -> GridFunction {
    let dt = traj.times[1] - traj.times[0];
    traj.times
        .iter()
        .zip(&traj.states)
        .skip(1)
        .fold(GridFunction::zeros(&traj.states[0].grid), |acc, (t, u)| {
            acc.axpy(C::new(dt * phi.eval(*t), 0.0), u)
        })
}

/// Hölder regularity of a trajectory.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub s: f64,
    pub alpha: f64,
    pub theta: f64,
    /// `‖u(t_m)‖_{C^s}` and `‖u(t_m)‖_{C^{s+α}}` on the sampled times.
    pub times: Vec<f64>,
    pub norm_s: Vec<f64>,
    pub norm_s_alpha: Vec<f64>,
    pub max_norm_s_alpha: f64,
    /// `max ‖u(t) - u(t')‖_{C^s} / |t - t'|^θ` over sampled pairs.
    pub time_quotient: f64,
}

/// Norms on at most 33 evenly spaced time slices.
pub fn regularity_report(
    traj: &Trajectory,
    s: f64,
    alpha: f64,
    theta: f64,
) -> Result<RegularityReport> {
    ensure!(
        s > 0.0 && alpha > 0.0,
        Parameter,
        "s and alpha must be positive"
    );
    ensure!(
        theta > 0.0 && theta < 1.0,
        Parameter,
        "theta must lie in (0, 1)"
    );
    let part = build_dyadic_partition(&traj.states[0].grid);
    let m = traj.states.len();
    let stride = (m - 1).div_ceil(32).max(1);
    let idx: Vec<usize> = (0..m)
        .step_by(stride)
        .chain(std::iter::once(m - 1))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut norm_s = vec![];
    let mut norm_sa = vec![];
    for &i in &idx {
        norm_s.push(holder_zygmund_norm(&traj.states[i], s, &part)?);
        norm_sa.push(holder_zygmund_norm(&traj.states[i], s + alpha, &part)?);
    }
    let mut q = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d = traj.states[j].sub(&traj.states[i]);
            let dt = traj.times[j] - traj.times[i];
            q = q.max(holder_zygmund_norm(&d, s, &part)? / dt.powf(theta));
        }
    }
    Ok(RegularityReport {
        s,
        alpha,
        theta,
        times: idx.iter().map(|&i| traj.times[i]).collect(),
        max_norm_s_alpha: norm_sa.iter().cloned().fold(0.0, f64::max),
        norm_s,
        norm_s_alpha: norm_sa,
        time_quotient: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::kernel::{Coefficient, KernelSpec};
    use crate::symbol::SymbolOptions;

    fn ctx(coef: Coefficient, npts: usize) -> ResolventContext {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, coef).unwrap();
        let g = TorusGrid::new(1, 1.0, npts).unwrap();
        ResolventContext::new(&spec, &g, &SymbolOptions::default()).unwrap()
    }

    #[test]
    fn bump_profile_is_compactly_supported() {
        let b = TimeProfile::Bump { a: 0.2, b: 0.8 };
        assert_eq!(b.eval(0.2), 0.0);
        assert_eq!(b.eval(0.9), 0.0);
        assert!((b.eval(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_forcing_gives_zero_trajectory() {
        let c = ctx(Coefficient::Constant(1.0), 64);
        let prob = CauchyProblem::new(Forcing::zero(), 0.5, 8);
        let tr = solve_cauchy(&c, &prob).unwrap();
        assert!(tr.states.iter().all(|u| u.max_abs() == 0.0));
        let rep = regularity_report(&tr, 0.25, 1.5, 0.5).unwrap();
        assert_eq!(rep.max_norm_s_alpha, 0.0);
        assert_eq!(rep.time_quotient, 0.0);
    }

    #[test]
    fn large_step_is_rejected() {
        let c = ctx(Coefficient::Constant(1.0), 64);
        let prob = CauchyProblem::new(Forcing::zero(), 10.0, 2);
        assert!(matches!(
            solve_cauchy(&c, &prob),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn contract_mode_rejects_nonzero_initial_forcing() {
        let c = ctx(Coefficient::Constant(1.0), 64);
        let psi = GridFunction::from_fn(c.grid(), |x| x[0].cos());
        let mut prob =
            CauchyProblem::new(Forcing::separable(TimeProfile::Constant(1.0), psi), 0.5, 16);
        prob.zero_start = true;
        assert!(matches!(
            solve_cauchy(&c, &prob),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn backward_solution_vanishes_at_terminal_time() {
        let c = ctx(Coefficient::Constant(1.0), 64);
        let psi = GridFunction::from_fn(c.grid(), |x| (-x[0] * x[0]).exp());
        let v = solve_backward(&c, TimeProfile::Bump { a: 0.1, b: 0.4 }, &psi, 0.5, 16).unwrap();
        assert_eq!(v.states.last().unwrap().max_abs(), 0.0);
        assert!(v.states[0].max_abs() > 0.0);
        let z = solve_backward(&c, TimeProfile::Constant(0.0), &psi, 0.5, 16).unwrap();
        assert!(z.states.iter().all(|u| u.max_abs() == 0.0));
    }
}
