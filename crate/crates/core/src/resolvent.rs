//! Exact resolvent `(λ - L)^{-1}` from the parametrix `q_λ(D, x)` by a
//! Neumann series in the remainder, and scans of its operator-norm
//! surrogates along rays in the sector.

use crate::error::{ensure, Error, Result};
use crate::grid::{
    build_dyadic_partition, holder_zygmund_norm, DyadicPartition, GridFunction, Space, TorusGrid,
};
use crate::kernel::KernelSpec;
use crate::psdo::{apply_xform, apply_yform, DirectOperator, DirectOptions};
use crate::stats::loglog_slope;
use crate::symbol::{
    compute_symbol_with, resolvent_symbol, sector_and_ellipticity, SectorReport, SymbolField,
    SymbolOptions,
};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

type C = Complex64;

/// Neumann depth cap.
pub const K_MAX: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct ResolventOptions {
    /// Stop once `‖R_λ^K f‖_∞ ≤ tol ‖f‖_∞`.
    pub tol: f64,
    pub k_max: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            k_max: K_MAX,
        }
    }
}

/// Everything about `L` that does not depend on `λ`.
pub struct ResolventContext {
    pub spec: KernelSpec,
    pub p: SymbolField,
    pub sector: SectorReport,
    /// Direct quadrature of the lower-order part, if the kernel has one.
    pub lower: Option<Arc<DirectOperator>>,
    direct: OnceLock<Arc<DirectOperator>>,
}

impl ResolventContext {
    pub fn new(spec: &KernelSpec, grid: &TorusGrid, symbol_opts: &SymbolOptions) -> Result<Self> {
        let p = compute_symbol_with(spec, grid, symbol_opts)?;
        let sector = sector_and_ellipticity(&p, spec.alpha)?;
        Self::from_parts(spec, p, sector)
    }

    pub fn from_parts(spec: &KernelSpec, p: SymbolField, sector: SectorReport) -> Result<Self> {
        let lower = if spec.has_lower_order() {
            let opts = DirectOptions {
                include_principal: false,
                ..Default::default()
            };
            Some(Arc::new(DirectOperator::new(spec, p.grid(), opts)?))
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            p,
            sector,
            lower,
            direct: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.p.grid()
    }

    /// Admissible threshold `R`.
    pub fn r(&self) -> f64 {
        self.sector.r_admissible
    }

    /// Full `L` by direct quadrature, built on first use. This is the
    /// independent oracle for defects.
    pub fn direct(&self) -> Result<Arc<DirectOperator>> {
        if let Some(d) = self.direct.get() {
            return Ok(d.clone());
        }
        let d = Arc::new(DirectOperator::new(
            &self.spec,
            self.grid(),
            DirectOptions::default(),
        )?);
        Ok(self.direct.get_or_init(|| d).clone())
    }

    /// `Lf` through the symbol path: `p(x, D) f + L² f`.
    pub fn apply_l(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut out = apply_xform(&self.p, f)?;
        if let Some(op) = &self.lower {
            out = out.add(&op.apply(f)?);
        }
        Ok(out)
    }

    pub fn at(&self, lambda: C, opts: ResolventOptions) -> Result<ResolventOperator<'_>> {
        ensure!(opts.tol > 0.0, Parameter, "tolerance must be positive");
        let q = resolvent_symbol(&self.p, lambda, Some(&self.sector))?;
        Ok(ResolventOperator {
            ctx: self,
            lambda,
            q,
            opts,
        })
    }
}

/// `(λ - L)^{-1}` at one admissible `λ`.
pub struct ResolventOperator<'a> {
    ctx: &'a ResolventContext,
    pub lambda: C,
    pub q: SymbolField,
    pub opts: ResolventOptions,
}

/// Result of one Neumann solve.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub u: GridFunction,
    /// Number of series terms `K`.
    pub iterations: usize,
    /// `‖R_λ^k f‖_∞ / ‖f‖_∞` for `k = 1..=K`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl ResolventOperator<'_> {
    /// `R_λ g = g - (λ - L)(q_λ(D, x) g)`, returning also `q_λ(D, x) g`.
    fn remainder_step(&self, r: &GridFunction) -> Result<(GridFunction, GridFunction)> {
        let g = apply_yform(&self.q, r)?;
        let lg = self.ctx.apply_l(&g)?;
        let next: Vec<C> = r
            .values
            .iter()
            .zip(g.values.iter().zip(&lg.values))
            .map(|(r, (g, l))| r - self.lambda * g + l)
            .collect();
        let mut next = GridFunction::from_values(&r.grid, next)?;
        next.space = Space::Physical;
        Ok((g, next))
    }

    /// `R_λ f`.
    pub fn remainder(&self, f: &GridFunction) -> Result<GridFunction> {
        Ok(self.remainder_step(f)?.1)
    }

    /// `u = q_λ(D, x) Σ_{k<K} R_λ^k f`.
    pub fn solve(&self, f: &GridFunction) -> Result<NeumannSolution> {
        f.require_physical()?;
        ensure!(f.grid == *self.ctx.grid(), Parameter, "grid mismatch");
        let fnorm = f.max_abs();
        let mut u = GridFunction::zeros(&f.grid);
        if fnorm == 0.0 {
            return Ok(NeumannSolution {
                u,
                iterations: 0,
                residuals: vec![],
                converged: true,
            });
        }
        let mut r = f.clone();
        let mut residuals = vec![];
        let mut rising = 0;
        let mut prev = 1.0;
        for k in 1..=self.opts.k_max {
            let (g, next) = self.remainder_step(&r)?;
            u = u.add(&g);
            let rel = next.max_abs() / fnorm;
            residuals.push(rel);
            if rel <= self.opts.tol {
                return Ok(NeumannSolution {
                    u,
                    iterations: k,
                    residuals,
                    converged: true,
                });
            }
            rising = if rel >= prev { rising + 1 } else { 0 };
            if rising >= 3 {
                return Err(Error::Divergence(format!(
                    "Neumann residual did not contract for 3 consecutive steps at |lambda| = {:.4e} \
                     (residual {rel:.3e}); increase |lambda|",
                    self.lambda.norm()
                )));
            }
            prev = rel;
            r = next;
        }
        Err(Error::Divergence(format!(
            "Neumann series needed more than {} terms at |lambda| = {:.4e} (residual {prev:.3e}); increase |lambda|",
            self.opts.k_max,
            self.lambda.norm()
        )))
    }

    /// `‖(λ - L)u - f‖_∞ / ‖f‖_∞` with `L` by direct quadrature.
    pub fn defect(&self, u: &GridFunction, f: &GridFunction) -> Result<f64> {
        resolvent_defect(&*self.ctx.direct()?, self.lambda, u, f)
    }
}

/// `‖(λ - L)u - f‖_∞ / ‖f‖_∞` for an explicit operator `L`.
pub fn resolvent_defect(
    l: &DirectOperator,
    lambda: C,
    u: &GridFunction,
    f: &GridFunction,
) -> Result<f64> {
    let lu = l.apply(u)?;
    let d = u.scaled(lambda).sub(&lu).sub(f).max_abs();
    let fnorm = f.max_abs();
    Ok(if fnorm == 0.0 { d } else { d / fnorm })
}

/// Builds the context and solves `(λ - L)u = f`.
pub fn solve_resolvent(
    spec: &KernelSpec,
    lambda: C,
    f: &GridFunction,
    tol: f64,
) -> Result<NeumannSolution> {
    let ctx = ResolventContext::new(spec, &f.grid, &SymbolOptions::default())?;
    ctx.at(
        lambda,
        ResolventOptions {
            tol,
            ..Default::default()
        },
    )?
    .solve(f)
}

/// Minimum of `(λ - L)^{-1} f` for real `λ` and `f ≥ 0`.
pub fn positivity_of_resolvent(
    res: &ResolventOperator,
    f: &GridFunction,
    tol_pos: Option<f64>,
) -> Result<(bool, f64)> {
    ensure!(
        res.lambda.im == 0.0 && res.lambda.re > 0.0,
        Precondition,
        "lambda must be real and positive"
    );
    let fmin = f.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    ensure!(
        fmin >= 0.0,
        Precondition,
        "right-hand side has negative values (min {fmin:.3e})"
    );
    let fnorm = f.max_abs();
    let sol = res.solve(f)?;
    let min = if fnorm == 0.0 { 0.0 } else { sol.u.min_re() };
    let tol = tol_pos.unwrap_or(1e-10 * fnorm);
    Ok((min >= -tol, min))
}

// ---------------------------------------------------------------------------
// Probe basket and generator scans
// ---------------------------------------------------------------------------

/// Name and carrier frequency of each basket member.
pub fn probe_catalogue() -> Vec<(String, f64)> {
    let mut v = vec![];
    for w in [0.3, 0.5, 0.8] {
        v.push((format!("bump_w{w}"), 0.0));
    }
    for k in [4.0, 12.0, 24.0] {
        v.push((format!("modulated_k{k}"), k));
    }
    for j in 1..=6 {
        v.push((format!("packet_j{j}"), 1.5 * 2f64.powi(j)));
    }
    v
}

/// The 12-function probe basket: Gaussian bumps (widths 0.3, 0.5, 0.8),
/// bumps of width 0.4 modulated at 4, 12, 24, and wave packets
/// `cos(1.5·2^j x₁) e^{-|x|²/0.16}` for `j = 1..6`. Members whose carrier
/// exceeds 3/4 of the Nyquist frequency are dropped.
pub fn probe_basket(grid: &TorusGrid) -> Vec<(String, GridFunction)> {
    let gauss = |x: [f64; 2], w: f64| (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp();
    let limit = 0.75 * grid.nyquist();
    probe_catalogue()
        .into_iter()
        .enumerate()
        .filter(|(_, (_, k))| *k <= limit)
        .map(|(i, (name, k))| {
            let f = match i {
                0..=2 => GridFunction::from_fn(grid, |x| gauss(x, [0.3, 0.5, 0.8][i])),
                3..=5 => GridFunction::from_fn(grid, |x| gauss(x, 0.4) * (k * x[0]).cos()),
                _ => GridFunction::from_fn(grid, |x| gauss(x, 0.4) * (k * x[0]).cos()),
            };
            (name, f)
        })
        .collect()
}

/// Measured resolvent bounds along one ray.
#[derive(Debug, Clone)]
pub struct GeneratorReport {
    pub angle: f64,
    pub s: f64,
    pub lambdas: Vec<C>,
    /// `max_probe ‖u‖_∞ / ‖f‖_∞` per `λ`.
    pub sup_norms: Vec<f64>,
    pub alpha_primes: Vec<f64>,
    /// `norms[a][l] = max_probe ‖u‖_{C^{s+α′_a}} / ‖f‖_{C^s}`.
    pub norms: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
    /// `-(α - α′)/α`.
    pub predicted: Vec<f64>,
    pub sup_slope: f64,
    /// Constants of `‖(λ - L)^{-1}‖ ≤ M / |λ - ω|` fitted with `ω = 0`.
    pub omega: f64,
    pub m_gen: f64,
    /// Largest Neumann depth used.
    pub max_iterations: usize,
}

impl GeneratorReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda_re,lambda_im,alpha_prime,norm,slope,predicted")?;
        for (l, lam) in self.lambdas.iter().enumerate() {
            writeln!(
                w,
                "{:.17e},{:.17e},inf,{:.17e},{:.17e},-1",
                lam.re, lam.im, self.sup_norms[l], self.sup_slope
            )?;
            for (a, ap) in self.alpha_primes.iter().enumerate() {
                writeln!(
                    w,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    lam.re, lam.im, ap, self.norms[a][l], self.slopes[a], self.predicted[a]
                )?;
            }
        }
        Ok(())
    }
}

/// Resolvent-norm surrogates over `λ = f R e^{iθ}` for each factor `f`.
pub fn generator_bound_scan(
    ctx: &ResolventContext,
    factors: &[f64],
    angle: f64,
    alpha_primes: &[f64],
    s: f64,
    probes: &[(String, GridFunction)],
    opts: ResolventOptions,
) -> Result<GeneratorReport> {
    ensure!(
        factors.len() >= 2,
        Parameter,
        "need at least two lambda values"
    );
    ensure!(!probes.is_empty(), Parameter, "empty probe set");
    ensure!(s > 0.0, Parameter, "smoothness index must be positive");
    let part = build_dyadic_partition(ctx.grid());
    let f_norms: Vec<(f64, f64)> = probes
        .iter()
        .map(|(_, f)| Ok((f.max_abs(), holder_zygmund_norm(f, s, &part)?)))
        .collect::<Result<_>>()?;
    let lambdas: Vec<C> = factors
        .iter()
        .map(|f| C::from_polar(f * ctx.r(), angle))
        .collect();
    let rows: Vec<(f64, Vec<f64>, usize)> = lambdas
        .par_iter()
        .map(|&lambda| scan_point(ctx, lambda, alpha_primes, s, probes, &f_norms, &part, opts))
        .collect::<Result<_>>()?;
    let mags: Vec<f64> = lambdas.iter().map(|l| l.norm()).collect();
    let sup_norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let norms: Vec<Vec<f64>> = (0..alpha_primes.len())
        .map(|a| rows.iter().map(|r| r.1[a]).collect())
        .collect();
    let slopes = norms.iter().map(|n| loglog_slope(&mags, n)).collect();
    let predicted = alpha_primes
        .iter()
        .map(|ap| -(ctx.spec.alpha - ap) / ctx.spec.alpha)
        .collect();
    let m_gen = mags
        .iter()
        .zip(&sup_norms)
        .map(|(m, n)| m * n)
        .fold(0.0, f64::max);
    Ok(GeneratorReport {
        angle,
        s,
        sup_slope: loglog_slope(&mags, &sup_norms),
        lambdas,
        sup_norms,
        alpha_primes: alpha_primes.to_vec(),
        norms,
        slopes,
        predicted,
        omega: 0.0,
        m_gen,
        max_iterations: rows.iter().map(|r| r.2).max().unwrap_or(0),
    })
}

#[allow(clippy::too_many_arguments)]
fn scan_point(
    ctx: &ResolventContext,
    lambda: C,
    alpha_primes: &[f64],
    s: f64,
    probes: &[(String, GridFunction)],
    f_norms: &[(f64, f64)],
    part: &DyadicPartition,
    opts: ResolventOptions,
) -> Result<(f64, Vec<f64>, usize)> {
    let res = ctx.at(lambda, opts)?;
    let mut sup = 0.0f64;
    let mut best = vec![0.0f64; alpha_primes.len()];
    let mut iters = 0;
    for ((_, f), (f_inf, f_cs)) in probes.iter().zip(f_norms) {
        let sol = res.solve(f)?;
        iters = iters.max(sol.iterations);
        sup = sup.max(sol.u.max_abs() / f_inf);
        for (b, ap) in best.iter_mut().zip(alpha_primes) {
            *b = b.max(holder_zygmund_norm(&sol.u, s + ap, part)? / f_cs);
        }
    }
    Ok((sup, best, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Coefficient, K1Family, K2Family};

    fn lacunary() -> Coefficient {
        Coefficient::Lacunary {
            mean: 1.0,
            spread: 0.25,
            tau: 0.5,
            octaves: 5,
            ell: 1.0,
            phase: 0.3,
        }
    }

    #[test]
    fn basket_has_twelve_members_on_fine_grids() {
        let g = TorusGrid::new(1, 1.0, 256).unwrap();
        assert_eq!(probe_basket(&g).len(), 12);
        let g2 = TorusGrid::new(2, 1.0, 32).unwrap();
        assert!(probe_basket(&g2).len() < 12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, lacunary()).unwrap();
        let g = TorusGrid::new(1, 1.0, 64).unwrap();
        let ctx = ResolventContext::new(&spec, &g, &SymbolOptions::default()).unwrap();
        let res = ctx
            .at(C::new(4.0 * ctx.r(), 0.0), Default::default())
            .unwrap();
        let sol = res.solve(&GridFunction::zeros(&g)).unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn constant_coefficient_needs_one_term() {
        let spec = KernelSpec::new(
            1,
            1.5,
            0.0,
            0.5,
            K1Family::StableLike {
                coefficient: Coefficient::Constant(1.0),
                skew: 0.2,
            },
            K2Family::None,
        )
        .unwrap();
        let g = TorusGrid::new(1, 1.0, 128).unwrap();
        let ctx = ResolventContext::new(
            &spec,
            &g,
            &SymbolOptions {
                rel_tol: 1e-11,
                ..Default::default()
            },
        )
        .unwrap();
        let res = ctx
            .at(C::new(2.0 * ctx.r(), 0.0), Default::default())
            .unwrap();
        let f = GridFunction::from_fn(&g, |x| (-x[0] * x[0] / 0.25).exp());
        let sol = res.solve(&f).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(res.defect(&sol.u, &f).unwrap() < 1e-10);
    }

    #[test]
    fn negative_rhs_is_a_precondition_error() {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, lacunary()).unwrap();
        let g = TorusGrid::new(1, 1.0, 64).unwrap();
        let ctx = ResolventContext::new(&spec, &g, &SymbolOptions::default()).unwrap();
        let res = ctx
            .at(C::new(2.0 * ctx.r(), 0.0), Default::default())
            .unwrap();
        let f = GridFunction::from_fn(&g, |x| (-x[0] * x[0]).exp() - 0.5);
        assert!(matches!(
            positivity_of_resolvent(&res, &f, None),
            Err(Error::Precondition(_))
        ));
        let (ok, min) = positivity_of_resolvent(&res, &GridFunction::zeros(&g), None).unwrap();
        assert!(ok && min == 0.0);
    }

    #[test]
    fn small_lambda_is_rejected() {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, lacunary()).unwrap();
        let g = TorusGrid::new(1, 1.0, 64).unwrap();
        let ctx = ResolventContext::new(&spec, &g, &SymbolOptions::default()).unwrap();
        assert!(matches!(
            ctx.at(C::new(0.5 * ctx.r(), 0.0), Default::default()),
            Err(Error::Precondition(_))
        ));
    }
}
