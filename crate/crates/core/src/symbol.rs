//! Symbols `p(x, ξ) = ∫ (e^{iy·ξ} - 1 - iξ·y 1_{|y|≤2}) k1(x, y) dy`,
//! their symbol-class norms, sector geometry and resolvent symbols
//! `q_λ = (λ - p)^{-1}`.
//!
//! Symbols are sampled at every grid point `x_i` and every lattice
//! frequency `ξ_k` (FFT order). Storing that product densely is expensive
//! in two dimensions, so a [`SymbolField`] keeps whatever structure it was
//! built with: a dense table, a sum of separable terms `c_t(x) P_t(ξ)`, or a
//! lazily evaluated reciprocal of another field.

use crate::error::{ensure, Error, Result};
use crate::grid::TorusGrid;
use crate::kernel::{K1Family, KernelSpec, Profile};
use crate::quadrature::adaptive;
use crate::special::{j0_minus_one, j1_minus_linear};
use crate::stats::loglog_slope;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

type C = Complex64;

const DENSE_LIMIT: usize = 1 << 25;

/// Quadrature controls for [`compute_symbol_with`].
#[derive(Debug, Clone, Copy)]
pub struct SymbolOptions {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for SymbolOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_panels: 20_000,
        }
    }
}

/// One term `coefficient(x_i) · multiplier(ξ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableTerm {
    pub coefficient: Vec<f64>,
    pub multiplier: Vec<C>,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(Vec<C>),
    Separable(Vec<SeparableTerm>),
    Reciprocal { base: Arc<SymbolField>, lambda: C },
}

/// Samples `p(x_i, ξ_k)` together with class metadata: order `m`, Hölder
/// index `τ` and derivative budget `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolField {
    grid: TorusGrid,
    pub order: f64,
    pub tau: f64,
    pub budget: usize,
    repr: Repr,
}

impl SymbolField {
    /// Dense field from a closure, averaged over aliased Nyquist variants.
    pub fn from_fn<F>(grid: &TorusGrid, order: f64, tau: f64, budget: usize, f: F) -> Result<Self>
    where
        F: Fn([f64; 2], [f64; 2]) -> C + Sync,
    {
        let len = grid.len();
        ensure!(
            len * len <= DENSE_LIMIT,
            Parameter,
            "dense symbol of {len}x{len} samples is too large"
        );
        let variants: Vec<Vec<[f64; 2]>> = (0..len).map(|k| grid.alias_variants(k)).collect();
        let values = (0..len)
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = grid.point(i);
                let f = &f;
                variants
                    .iter()
                    .map(move |vs| vs.iter().map(|&v| f(x, v)).sum::<C>() / vs.len() as f64)
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            order,
            tau,
            budget,
            repr: Repr::Dense(values),
        })
    }

    /// `x`-independent field from a Fourier multiplier.
    pub fn multiplier<F: Fn([f64; 2]) -> C>(
        grid: &TorusGrid,
        order: f64,
        tau: f64,
        budget: usize,
        m: F,
    ) -> Self {
        let term = SeparableTerm {
            coefficient: vec![1.0; grid.len()],
            multiplier: grid.sample_multiplier(m),
        };
        Self {
            grid: grid.clone(),
            order,
            tau,
            budget,
            repr: Repr::Separable(vec![term]),
        }
    }

    pub fn separable(
        grid: &TorusGrid,
        order: f64,
        tau: f64,
        budget: usize,
        terms: Vec<SeparableTerm>,
    ) -> Result<Self> {
        for t in &terms {
            ensure!(
                t.coefficient.len() == grid.len() && t.multiplier.len() == grid.len(),
                Parameter,
                "separable term does not match the grid"
            );
        }
        Ok(Self {
            grid: grid.clone(),
            order,
            tau,
            budget,
            repr: Repr::Separable(terms),
        })
    }

    pub fn zero(grid: &TorusGrid) -> Self {
        Self {
            grid: grid.clone(),
            order: 0.0,
            tau: 0.5,
            budget: grid.dim() + 1,
            repr: Repr::Separable(vec![]),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Number of `x` samples (equal to the number of lattice frequencies).
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize, k: usize) -> C {
        match &self.repr {
            Repr::Dense(v) => v[i * self.grid.len() + k],
            Repr::Separable(terms) => terms
                .iter()
                .map(|t| t.multiplier[k] * t.coefficient[i])
                .sum(),
            Repr::Reciprocal { base, lambda } => (lambda - base.value(i, k)).inv(),
        }
    }

    /// All frequency samples at `x_i`.
    pub fn row(&self, i: usize) -> Vec<C> {
        let len = self.grid.len();
        match &self.repr {
            Repr::Dense(v) => v[i * len..(i + 1) * len].to_vec(),
            Repr::Separable(terms) => {
                let mut out = vec![C::new(0.0, 0.0); len];
                for t in terms {
                    let c = t.coefficient[i];
                    out.iter_mut()
                        .zip(&t.multiplier)
                        .for_each(|(o, m)| *o += m * c);
                }
                out
            }
            Repr::Reciprocal { base, lambda } => base
                .row(i)
                .into_iter()
                .map(|p| (lambda - p).inv())
                .collect(),
        }
    }

    /// The separable terms, when the field is stored that way.
    pub fn separable_terms(&self) -> Option<&[SeparableTerm]> {
        match &self.repr {
            Repr::Separable(t) => Some(t),
            _ => None,
        }
    }

    /// The reciprocal structure `(base, λ)` of a resolvent symbol.
    pub fn reciprocal_parts(&self) -> Option<(&SymbolField, C)> {
        match &self.repr {
            Repr::Reciprocal { base, lambda } => Some((base, *lambda)),
            _ => None,
        }
    }

    /// The common multiplier when the field does not depend on `x`.
    pub fn x_independent_multiplier(&self) -> Option<Vec<C>> {
        match &self.repr {
            Repr::Separable(terms) => {
                let constant = terms
                    .iter()
                    .all(|t| t.coefficient.iter().all(|&c| c == t.coefficient[0]));
                constant.then(|| self.row(0))
            }
            Repr::Reciprocal { base, lambda } => base
                .x_independent_multiplier()
                .map(|m| m.into_iter().map(|p| (lambda - p).inv()).collect()),
            Repr::Dense(_) => {
                let r0 = self.row(0);
                (1..self.len()).all(|i| self.row(i) == r0).then_some(r0)
            }
        }
    }

    /// `max_{i,k} |p(x_i, ξ_k) - p(x_0, ξ_k)|`.
    pub fn x_spread(&self) -> f64 {
        let r0 = self.row(0);
        (1..self.len())
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(&r0)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.row(i).iter().map(|v| v.norm()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    /// `p + c`.
    pub fn shifted(&self, c: C) -> Self {
        let extra = SeparableTerm {
            coefficient: vec![1.0; self.len()],
            multiplier: vec![c; self.len()],
        };
        let repr = match &self.repr {
            Repr::Separable(terms) => {
                let mut t = terms.clone();
                t.push(extra);
                Repr::Separable(t)
            }
            _ => Repr::Dense(self.dense_values().into_iter().map(|v| v + c).collect()),
        };
        Self {
            repr,
            ..self.clone()
        }
    }

    /// `a · p`.
    pub fn scaled(&self, a: f64) -> Self {
        let repr = match &self.repr {
            Repr::Separable(terms) => Repr::Separable(
                terms
                    .iter()
                    .map(|t| SeparableTerm {
                        coefficient: t.coefficient.iter().map(|c| c * a).collect(),
                        multiplier: t.multiplier.clone(),
                    })
                    .collect(),
            ),
            _ => Repr::Dense(self.dense_values().into_iter().map(|v| v * a).collect()),
        };
        Self {
            repr,
            ..self.clone()
        }
    }

    /// `p̃(x, ξ) = p(x, -ξ)`.
    pub fn reflected(&self) -> Self {
        let len = self.len();
        let neg: Vec<usize> = (0..len).map(|k| self.grid.neg_index(k)).collect();
        let repr = match &self.repr {
            Repr::Dense(v) => Repr::Dense(
                (0..len * len)
                    .map(|q| v[(q / len) * len + neg[q % len]])
                    .collect(),
            ),
            Repr::Separable(terms) => Repr::Separable(
                terms
                    .iter()
                    .map(|t| SeparableTerm {
                        coefficient: t.coefficient.clone(),
                        multiplier: neg.iter().map(|&k| t.multiplier[k]).collect(),
                    })
                    .collect(),
            ),
            Repr::Reciprocal { base, lambda } => Repr::Reciprocal {
                base: Arc::new(base.reflected()),
                lambda: *lambda,
            },
        };
        Self {
            repr,
            ..self.clone()
        }
    }

    fn dense_values(&self) -> Vec<C> {
        (0..self.len()).flat_map(|i| self.row(i)).collect()
    }

    /// CSV rows `x, ξ, Re p, Im p` for every `x_stride`-th grid point.
    pub fn write_csv<W: Write>(&self, mut w: W, x_stride: usize) -> std::io::Result<()> {
        let n = self.grid.dim();
        if n == 1 {
            writeln!(w, "x,xi,re,im")?;
        } else {
            writeln!(w, "x1,x2,xi1,xi2,re,im")?;
        }
        for i in (0..self.len()).step_by(x_stride.max(1)) {
            let x = self.grid.point(i);
            for (k, v) in self.row(i).iter().enumerate() {
                let xi = self.grid.freq(k);
                if n == 1 {
                    writeln!(
                        w,
                        "{:.17e},{:.17e},{:.17e},{:.17e}",
                        x[0], xi[0], v.re, v.im
                    )?;
                } else {
                    writeln!(
                        w,
                        "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                        x[0], x[1], xi[0], xi[1], v.re, v.im
                    )?;
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Symbol quadrature
// ---------------------------------------------------------------------------

/// `sin s - s` (compensated) or `sin s`.
fn odd_part(s: f64, compensate: bool) -> f64 {
    if !compensate {
        return s.sin();
    }
    if s.abs() < 0.5 {
        let s2 = s * s;
        let mut term = -s * s2 / 6.0;
        let mut sum = term;
        for k in 2..12 {
            term *= -s2 / ((2 * k) * (2 * k + 1)) as f64;
            sum += term;
        }
        sum
    } else {
        s.sin() - s
    }
}

/// `cos s - 1` without cancellation.
fn even_part(s: f64) -> f64 {
    let h = (0.5 * s).sin();
    -2.0 * h * h
}

/// Integral over `r ∈ (0, r_end]` of an integrand behaving like
/// `r^e` near the origin, for oscillation frequency `xi`.
///
/// `(0, ρ]` with `ρ = min(1, 1/ξ)` is mapped by `r = ρ t^q`, `q = 1/(e+1)`,
/// which turns the leading power into a constant. The rest is split at
/// dyadic radii, at 1 and 2, and at every full oscillation period.
fn split_integral<F: Fn(f64) -> C>(
    f: &F,
    e: f64,
    xi: f64,
    r_end: f64,
    opts: &SymbolOptions,
) -> Result<C> {
    assert!(e > -1.0, "non-integrable singularity r^{e}");
    let rho = (1.0 / xi).min(1.0);
    let q = 1.0 / (e + 1.0);
    let inner = adaptive(
        |t: f64| {
            let r = rho * t.powf(q);
            f(r) * (rho * q * t.powf(q - 1.0))
        },
        &[0.0, 0.5, 1.0],
        opts.rel_tol * 0.25,
        1e-300,
        opts.max_panels,
    );
    ensure!(
        inner.converged,
        Quadrature,
        "inner region at |xi| = {xi}: error {:.3e} for value {:.6e}",
        inner.error,
        inner.value.norm()
    );
    if r_end <= rho {
        return Ok(inner.value);
    }
    let mut breaks = vec![rho];
    let mut r = 2.0 * rho;
    while r < 1.0 {
        breaks.push(r);
        r *= 2.0;
    }
    breaks.push(1.0);
    if r_end > 2.0 {
        breaks.push(2.0);
    }
    let period = 2.0 * PI / xi;
    let mut k = (rho / period).ceil();
    while k * period < r_end {
        breaks.push(k * period);
        k += 1.0;
    }
    breaks.push(r_end);
    breaks.retain(|&b| b >= rho && b <= r_end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let outer = adaptive(
        f,
        &breaks,
        opts.rel_tol * 0.25,
        0.25 * opts.rel_tol * inner.value.norm(),
        opts.max_panels,
    );
    ensure!(
        outer.converged,
        Quadrature,
        "outer region at |xi| = {xi}: error {:.3e} for value {:.6e}",
        outer.error,
        outer.value.norm()
    );
    Ok(inner.value + outer.value)
}

/// `∫_R^∞ e^{iωr} r^{-s} dr` by its asymptotic series (needs `ωR ≳ 40`).
fn oscillatory_tail(omega: f64, big_r: f64, s: f64) -> C {
    let iw = C::new(0.0, omega);
    let mut term = C::new(big_r.powf(-s), 0.0) / iw;
    let mut sum = term;
    for k in 0..200 {
        let next = term * ((s + k as f64) / big_r) / iw;
        if next.norm() > term.norm() || next.norm() < 1e-18 * sum.norm() {
            break;
        }
        term = next;
        sum += term;
    }
    -C::from_polar(1.0, omega * big_r) * sum
}

/// `2 ∫_R^∞ (cos ξr - 1) r^{-s} dr` for the full-space power law.
fn full_space_tail(xi: f64, big_r: f64, s: f64) -> f64 {
    2.0 * (oscillatory_tail(xi, big_r, s).re - big_r.powf(1.0 - s) / (s - 1.0))
}

fn full_space_end(xi: f64) -> f64 {
    2f64.max(60.0 / xi)
}

/// Even and odd radial integrals of a profile at `|ξ| = xi`.
///
/// With `g(y) = (1 + skew·ŷ₁) R(|y|)` the symbol of `g` is
/// `I_e(|ξ|) + i · skew · (ξ₁/|ξ|) · I_o(|ξ|)`, where the angular
/// integrals reduce to `2(cos z - 1)`, `2(sin z - z)` for `n = 1` and to
/// `2π(J₀(z) - 1)`, `2π(J₁(z) - z/2)` for `n = 2`.
fn radial_integrals(
    profile: &Profile,
    compensated: bool,
    xi: f64,
    opts: &SymbolOptions,
) -> Result<(f64, f64)> {
    if xi == 0.0 {
        return Ok((0.0, 0.0));
    }
    let n = profile.dim();
    let nf = n as f64;
    let sp = profile.singular_exponent();
    let tail = profile.support_radius().is_none();
    let r_end = profile
        .support_radius()
        .unwrap_or_else(|| full_space_end(xi));
    let even = |r: f64| {
        let z = r * xi;
        let ang = if n == 1 {
            2.0 * even_part(z)
        } else {
            2.0 * PI * j0_minus_one(z)
        };
        C::new(profile.radial(r) * r.powi(n as i32 - 1) * ang, 0.0)
    };
    let mut ie = split_integral(&even, nf + 1.0 - sp, xi, r_end, opts)?.re;
    if tail {
        let (c, s) = profile
            .power_tail()
            .ok_or_else(|| Error::Parameter("unbounded profile without power tail".into()))?;
        ensure!(
            n == 1,
            Parameter,
            "full-space diagnostic symbol is only available for n = 1"
        );
        ie += c * full_space_tail(xi, r_end, s);
    }
    let mut io = 0.0;
    if profile.skew() != 0.0 {
        ensure!(
            !tail,
            Parameter,
            "full-space diagnostic symbol requires a symmetric kernel"
        );
        let odd = |r: f64| {
            let z = r * xi;
            let comp = compensated && r <= 2.0;
            let ang = if n == 1 {
                2.0 * odd_part(z, comp)
            } else if comp {
                2.0 * PI * j1_minus_linear(z)
            } else {
                2.0 * PI * crate::special::j1(z)
            };
            C::new(profile.radial(r) * r.powi(n as i32 - 1) * ang, 0.0)
        };
        let e = if compensated { nf + 2.0 - sp } else { nf - sp };
        io = split_integral(&odd, e, xi, r_end, opts)?.re;
    }
    Ok((ie, io))
}

fn lattice_key(grid: &TorusGrid, v: [f64; 2]) -> u64 {
    let a = (v[0] * grid.ell()).round() as i64;
    let b = (v[1] * grid.ell()).round() as i64;
    (a * a + b * b) as u64
}

fn direction_cosine(n: usize, v: [f64; 2]) -> f64 {
    let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if r == 0.0 {
        0.0
    } else if n == 1 {
        v[0].signum()
    } else {
        v[0] / r
    }
}

fn check_symbol_spec(spec: &KernelSpec, grid: &TorusGrid) -> Result<()> {
    spec.check_ranges()?;
    ensure!(
        grid.dim() == spec.n,
        Parameter,
        "grid dimension {} differs from kernel dimension {}",
        grid.dim(),
        spec.n
    );
    if let K1Family::FullSpace { .. } = spec.k1 {
        ensure!(
            spec.n == 1,
            Parameter,
            "full-space diagnostic symbol is only available for n = 1"
        );
    }
    Ok(())
}

/// Symbol of `L¹` on every `(x_i, ξ_k)` with the default tolerance.
pub fn compute_symbol(spec: &KernelSpec, grid: &TorusGrid) -> Result<SymbolField> {
    compute_symbol_with(spec, grid, &SymbolOptions::default())
}

/// Symbol of `L¹` through the separable structure of the kernel terms: one
/// radial quadrature per distinct lattice norm and term, then
/// `p(x_i, ξ_k) = Σ_t w_t c_t(x_i) P_t(ξ_k)`.
pub fn compute_symbol_with(
    spec: &KernelSpec,
    grid: &TorusGrid,
    opts: &SymbolOptions,
) -> Result<SymbolField> {
    check_symbol_spec(spec, grid)?;
    let n = spec.n;
    let mut keys: Vec<u64> = (0..grid.len())
        .flat_map(|k| grid.alias_variants(k))
        .map(|v| lattice_key(grid, v))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let mut terms = vec![];
    for t in spec.k1_terms() {
        let profile = t.profile;
        let table: HashMap<u64, (f64, f64)> = keys
            .par_iter()
            .map(|&key| {
                let xi = (key as f64).sqrt() / grid.ell();
                radial_integrals(&profile, spec.compensated(), xi, opts)
                    .map(|v| (key, v))
                    .map_err(|e| match e {
                        Error::Quadrature(m) => {
                            Error::Quadrature(format!("{m} (worst point: every x, |xi| = {xi:.6})"))
                        }
                        other => other,
                    })
            })
            .collect::<Result<_>>()?;
        let skew = profile.skew();
        let multiplier = grid.sample_multiplier(|v| {
            let (ie, io) = table[&lattice_key(grid, v)];
            C::new(ie, skew * direction_cosine(n, v) * io)
        });
        let coefficient = (0..grid.len())
            .map(|i| t.weight * t.coefficient.eval(grid.point(i)))
            .collect();
        terms.push(SeparableTerm {
            coefficient,
            multiplier,
        });
    }
    SymbolField::separable(grid, spec.alpha, spec.tau, spec.derivative_budget(), terms)
}

/// Direct evaluation of `p(x, ξ)` from point values of `k1(x, ·)`.
///
/// Independent of the separable structure: `n = 1` pairs `±r`, `n = 2`
/// uses a trapezoid rule over half-circle directions paired with their
/// antipodes. Used to cross-check [`compute_symbol_with`].
pub fn symbol_at(spec: &KernelSpec, x: [f64; 2], xi: [f64; 2], opts: &SymbolOptions) -> Result<C> {
    spec.check_ranges()?;
    let xin = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    if xin == 0.0 {
        return Ok(C::new(0.0, 0.0));
    }
    let n = spec.n;
    let full = matches!(spec.k1, K1Family::FullSpace { .. });
    ensure!(
        !full || (n == 1 && spec.is_symmetric()),
        Parameter,
        "full-space diagnostic requires n = 1 and symmetry"
    );
    let comp = spec.compensated();
    let sp = n as f64 + spec.alpha;
    let f = |r: f64| -> C {
        let c = comp && r <= 2.0;
        if n == 1 {
            let a = spec.k1(x, [r, 0.0]);
            let b = spec.k1(x, [-r, 0.0]);
            let s = r * xi[0];
            C::new(even_part(s) * (a + b), odd_part(s, c) * (a - b))
        } else {
            let m = 2 * (r * xin).ceil() as usize + 24;
            let mut acc = C::new(0.0, 0.0);
            for j in 0..m {
                let th = PI * j as f64 / m as f64;
                let w = [th.cos(), th.sin()];
                let y = [r * w[0], r * w[1]];
                let a = spec.k1(x, y);
                let b = spec.k1(x, [-y[0], -y[1]]);
                let s = r * (xi[0] * w[0] + xi[1] * w[1]);
                acc += C::new(even_part(s) * (a + b), odd_part(s, c) * (a - b));
            }
            acc * (PI / m as f64 * r)
        }
    };
    let e = if spec.is_symmetric() || comp {
        n as f64 + 1.0 - sp
    } else {
        n as f64 - sp
    };
    let r_end = if full { full_space_end(xin) } else { 2.0 };
    let mut v = split_integral(&f, e, xin, r_end, opts)?;
    if let K1Family::FullSpace { scale } = spec.k1 {
        v += scale * full_space_tail(xin, r_end, sp);
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Symbol-class norms
// ---------------------------------------------------------------------------

/// Central-difference weights for derivative order 0..=3 at unit step,
/// Richardson-combined with the doubled step: `(4 D_h - D_{2h}) / 3`.
fn richardson_stencil(order: usize) -> Vec<(i64, f64)> {
    let base: Vec<(i64, f64)> = match order {
        0 => return vec![(0, 1.0)],
        1 => vec![(-1, -0.5), (1, 0.5)],
        2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => panic!("derivative order {order} not supported"),
    };
    let scale2 = 2f64.powi(order as i32);
    let mut acc: HashMap<i64, f64> = HashMap::new();
    for &(o, w) in &base {
        *acc.entry(o).or_default() += 4.0 * w / 3.0;
        *acc.entry(2 * o).or_default() -= w / scale2 / 3.0;
    }
    let mut v: Vec<(i64, f64)> = acc.into_iter().filter(|p| p.1 != 0.0).collect();
    v.sort_by_key(|p| p.0);
    v
}

fn stencil_reach(order: usize) -> i64 {
    richardson_stencil(order)
        .iter()
        .map(|p| p.0.abs())
        .max()
        .unwrap_or(0)
}

/// Breakdown of a discrete `C^τ S^m_{1,0;N}` norm.
#[derive(Debug, Clone)]
pub struct ClassNorm {
    pub value: f64,
    pub worst_beta: [usize; 2],
    pub worst_xi: [f64; 2],
    /// Largest contribution per `|β|`.
    pub per_order: Vec<f64>,
}

/// `x` samples used for the Hölder quotient: a stride subsample of at most
/// 64 grid points.
fn norm_x_samples(grid: &TorusGrid) -> Vec<usize> {
    let m = grid.npts();
    if grid.dim() == 1 {
        let stride = (m / 64).max(1);
        (0..m).step_by(stride).collect()
    } else {
        let stride = (m / 8).max(1);
        let axis: Vec<usize> = (0..m).step_by(stride).collect();
        axis.iter()
            .flat_map(|&a| axis.iter().map(move |&b| a * m + b))
            .collect()
    }
}

/// Discrete `‖p‖_{C^τ S^m_{1,0;N}}`.
pub fn symbol_class_norm(p: &SymbolField, m: f64) -> Result<f64> {
    Ok(class_norm_detail(p, m)?.value)
}

/// [`symbol_class_norm`] with the location of the maximum.
///
/// For each multi-index `|β| ≤ N` and each lattice frequency whose stencil
/// stays strictly inside the Nyquist band, evaluates
/// `⟨ξ⟩^{-m+|β|} (sup_x |D^β p| + sup_{x≠x'} |D^β p(x) - D^β p(x')| / |x - x'|^τ)`.
pub fn class_norm_detail(p: &SymbolField, m: f64) -> Result<ClassNorm> {
    let grid = p.grid();
    let n = grid.dim();
    let big_n = p.budget;
    ensure!(
        big_n <= 3,
        Parameter,
        "derivative budget {big_n} exceeds the supported order 3"
    );
    let reach = (0..=big_n).map(stencil_reach).max().unwrap_or(0);
    let half = (grid.npts() / 2) as i64;
    let usable = half - 1 - reach;
    ensure!(
        usable >= 4,
        Parameter,
        "xi-grid with {} points per axis is too coarse for a stencil of reach {reach}",
        grid.npts()
    );
    let betas: Vec<[usize; 2]> = if n == 1 {
        (0..=big_n).map(|b| [b, 0]).collect()
    } else {
        (0..=big_n)
            .flat_map(|a| (0..=big_n - a).map(move |b| [a, b]))
            .collect()
    };
    let xs = norm_x_samples(grid);
    let rows: Vec<Vec<C>> = xs.par_iter().map(|&i| p.row(i)).collect();
    let points: Vec<[f64; 2]> = xs.iter().map(|&i| grid.point(i)).collect();
    let mut dist = vec![0.0; xs.len() * xs.len()];
    for a in 0..xs.len() {
        for b in 0..xs.len() {
            dist[a * xs.len() + b] = grid.torus_distance(points[a], points[b]).powf(p.tau);
        }
    }
    let h = 1.0 / grid.ell();
    let npts = grid.npts() as i64;
    let to_pos = |s: i64| -> usize { s.rem_euclid(npts) as usize };
    let signed: Vec<i64> = (-usable..=usable).collect();
    let centres: Vec<[i64; 2]> = if n == 1 {
        signed.iter().map(|&s| [s, 0]).collect()
    } else {
        signed
            .iter()
            .flat_map(|&a| signed.iter().map(move |&b| [a, b]))
            .collect()
    };
    let stencils: Vec<Vec<(i64, f64)>> = (0..=big_n).map(richardson_stencil).collect();

    let best = centres
        .par_iter()
        .map(|&c| {
            let xi = [c[0] as f64 * h, c[1] as f64 * h];
            let bracket = (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let mut local: Vec<(f64, [usize; 2])> = vec![];
            let mut d = vec![C::new(0.0, 0.0); xs.len()];
            for beta in &betas {
                d.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
                let order = beta[0] + beta[1];
                let hp = h.powi(order as i32);
                for &(o1, w1) in &stencils[beta[0]] {
                    let second: &[(i64, f64)] = if n == 1 {
                        &[(0, 1.0)]
                    } else {
                        &stencils[beta[1]]
                    };
                    for &(o2, w2) in second {
                        let k = if n == 1 {
                            to_pos(c[0] + o1)
                        } else {
                            to_pos(c[0] + o1) * grid.npts() + to_pos(c[1] + o2)
                        };
                        let w = w1 * w2 / hp;
                        for (dv, row) in d.iter_mut().zip(&rows) {
                            *dv += row[k] * w;
                        }
                    }
                }
                let sup = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let mut quot: f64 = 0.0;
                for a in 0..xs.len() {
                    for b in (a + 1)..xs.len() {
                        let q = (d[a] - d[b]).norm() / dist[a * xs.len() + b];
                        quot = quot.max(q);
                    }
                }
                let val = bracket.powf(-m + order as f64) * (sup + quot);
                local.push((val, *beta));
            }
            (local, xi)
        })
        .collect::<Vec<_>>();

    let mut out = ClassNorm {
        value: 0.0,
        worst_beta: [0, 0],
        worst_xi: [0.0, 0.0],
        per_order: vec![0.0; big_n + 1],
    };
    for (local, xi) in best {
        for (val, beta) in local {
            let o = beta[0] + beta[1];
            out.per_order[o] = out.per_order[o].max(val);
            if val > out.value {
                out.value = val;
                out.worst_beta = beta;
                out.worst_xi = xi;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sector geometry
// ---------------------------------------------------------------------------

/// Sector and ellipticity data of a symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorReport {
    pub alpha: f64,
    /// `max |Im p / Re p|` over `|ξ| ≥ 1`.
    pub m_ratio: f64,
    /// `π - arctan M`.
    pub delta: f64,
    /// `(π/2 + δ) / 2`.
    pub delta_prime: f64,
    /// `min (-Re p) / |ξ|^α` over `|ξ| ≥ 1`.
    pub c_ell: f64,
    /// Sampled `inf |λ - p| / max(|λ|, |ξ|^α)` over the closed sector and `|ξ| ≥ 1`.
    pub c_delta_prime: f64,
    /// `sup |p|` over `|ξ| ≤ 1`.
    pub low_frequency_bound: f64,
    /// Grid-certified threshold before doubling.
    pub r_certified: f64,
    /// Admissible `R = 2 R_certified`.
    pub r_admissible: f64,
    pub worst_ellipticity: ([f64; 2], [f64; 2]),
}

impl SectorReport {
    pub fn to_text(&self) -> String {
        let w = self.worst_ellipticity;
        format!(
            "alpha = {:.17e}\nm_ratio = {:.17e}\ndelta = {:.17e}\ndelta_prime = {:.17e}\nc_ell = {:.17e}\n\
             c_delta_prime = {:.17e}\nlow_frequency_bound = {:.17e}\nr_certified = {:.17e}\nr_admissible = {:.17e}\n\
             worst_x = {:.6e} {:.6e}\nworst_xi = {:.6e} {:.6e}\n",
            self.alpha,
            self.m_ratio,
            self.delta,
            self.delta_prime,
            self.c_ell,
            self.c_delta_prime,
            self.low_frequency_bound,
            self.r_certified,
            self.r_admissible,
            w.0[0],
            w.0[1],
            w.1[0],
            w.1[1]
        )
    }

    /// Whether `λ` satisfies `|λ| ≥ R` and `|arg λ| ≤ δ′`.
    pub fn admits(&self, lambda: C) -> bool {
        lambda.norm() >= self.r_admissible * (1.0 - 1e-12)
            && lambda.arg().abs() <= self.delta_prime + 1e-12
    }
}

/// `inf_{t ≥ tmin} |t e^{iφ} - p| / max(t, A)`.
pub fn ray_ratio(p: C, phi: f64, a: f64, tmin: f64) -> f64 {
    let e = C::from_polar(1.0, phi);
    let mut best = f64::INFINITY;
    if a > tmin {
        let t = (p * e.conj()).re.clamp(tmin, a);
        best = (e * t - p).norm() / a;
    }
    let t0 = tmin.max(a);
    let dist = if t0 > 0.0 {
        let w = p / t0;
        let ww = w.norm_sqr();
        let s = if ww == 0.0 {
            0.0
        } else {
            ((e * w.conj()).re / ww).clamp(0.0, 1.0)
        };
        (e - w * s).norm()
    } else if p.norm() == 0.0 {
        1.0
    } else {
        let u = p / p.norm();
        let s = (e * u.conj()).re.max(0.0);
        (e - u * s).norm()
    };
    best.min(dist)
}

/// Sector angle, ellipticity constant and admissible `R` of a symbol.
///
/// `R` is certified on an absolute ladder `T = 2^{k/4}`: the smallest `T`
/// such that `|λ - p| ≥ c_{δ′} max(|λ|, |ξ|^α)` for every sample and every
/// `λ` on the sector boundary rays with `|λ| ≥ T`, and at least the
/// low-frequency bound `sup_{|ξ|≤1} |p|`. The reported admissible value is
/// twice the certified one.
pub fn sector_and_ellipticity(p: &SymbolField, alpha: f64) -> Result<SectorReport> {
    ensure!(
        alpha > 0.0 && alpha < 2.0,
        Parameter,
        "alpha out of (0,2): {alpha}"
    );
    let grid = p.grid();
    let norms: Vec<f64> = (0..grid.len()).map(|k| grid.freq_norm(k)).collect();
    let weights: Vec<f64> = norms.iter().map(|r| r.powf(alpha)).collect();

    struct Pass1 {
        m: f64,
        c_ell: f64,
        worst: (usize, usize),
        low: f64,
        bad: Vec<(usize, usize)>,
    }
    let p1 = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let row = p.row(i);
            let mut st = Pass1 {
                m: 0.0,
                c_ell: f64::INFINITY,
                worst: (i, 0),
                low: 0.0,
                bad: vec![],
            };
            for (k, v) in row.iter().enumerate() {
                if norms[k] >= 1.0 {
                    let e = -v.re / weights[k];
                    if e < st.c_ell {
                        st.c_ell = e;
                        st.worst = (i, k);
                    }
                    if v.re < 0.0 {
                        st.m = st.m.max((v.im / v.re).abs());
                    } else {
                        st.bad.push((i, k));
                    }
                }
                if norms[k] <= 1.0 {
                    st.low = st.low.max(v.norm());
                }
            }
            st
        })
        .reduce(
            || Pass1 {
                m: 0.0,
                c_ell: f64::INFINITY,
                worst: (0, 0),
                low: 0.0,
                bad: vec![],
            },
            |mut a, b| {
                a.m = a.m.max(b.m);
                a.low = a.low.max(b.low);
                if b.c_ell < a.c_ell {
                    a.c_ell = b.c_ell;
                    a.worst = b.worst;
                }
                a.bad.extend(b.bad);
                a
            },
        );
    let worst = (grid.point(p1.worst.0), grid.freq(p1.worst.1));
    if !(p1.c_ell > 0.0) {
        let (mut rlo, mut rhi) = (f64::INFINITY, 0.0f64);
        let (mut xlo, mut xhi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &(i, k) in &p1.bad {
            rlo = rlo.min(norms[k]);
            rhi = rhi.max(norms[k]);
            let x = grid.point(i);
            for a in 0..2 {
                xlo[a] = xlo[a].min(x[a]);
                xhi[a] = xhi[a].max(x[a]);
            }
        }
        return Err(Error::Validation(format!(
            "ellipticity fails: c_ell = {:.6e} at x = ({:.4}, {:.4}), xi = ({:.4}, {:.4}); \
             {} samples with Re p >= 0, failing region |xi| in [{rlo:.4}, {rhi:.4}], x1 in [{:.4}, {:.4}], x2 in [{:.4}, {:.4}]",
            p1.c_ell,
            worst.0[0],
            worst.0[1],
            worst.1[0],
            worst.1[1],
            p1.bad.len(),
            xlo[0],
            xhi[0],
            xlo[1],
            xhi[1]
        )));
    }
    let delta = PI - p1.m.atan();
    let delta_prime = 0.5 * (0.5 * PI + delta);
    let rays = [-delta_prime, 0.0, delta_prime];

    let c_dp = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let row = p.row(i);
            let mut best = f64::INFINITY;
            for (k, v) in row.iter().enumerate() {
                if norms[k] >= 1.0 {
                    for &phi in &rays {
                        best = best.min(ray_ratio(*v, phi, weights[k], 0.0));
                    }
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);

    // Ladder index k with T = 2^{k/4}; the ratio is nondecreasing in T.
    const K_MIN: i32 = -120;
    const K_MAX: i32 = 240;
    let ladder = |k: i32| 2f64.powf(k as f64 / 4.0);
    let holds = |v: C, a: f64, t: f64| {
        rays.iter()
            .all(|&phi| ray_ratio(v, phi, a, t) >= c_dp * (1.0 - 1e-12))
    };
    let k_needed = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let row = p.row(i);
            let mut kmax = K_MIN;
            for (k, v) in row.iter().enumerate() {
                if norms[k] >= 1.0 || holds(*v, weights[k], ladder(kmax)) {
                    continue;
                }
                let (mut lo, mut hi) = (kmax, K_MAX);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if holds(*v, weights[k], ladder(mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                kmax = hi;
            }
            kmax
        })
        .reduce(|| K_MIN, i32::max);
    let r_cert = p1.low.max(ladder(k_needed));
    Ok(SectorReport {
        alpha,
        m_ratio: p1.m,
        delta,
        delta_prime,
        c_ell: p1.c_ell,
        c_delta_prime: c_dp,
        low_frequency_bound: p1.low,
        r_certified: r_cert,
        r_admissible: 2.0 * r_cert,
        worst_ellipticity: worst,
    })
}

// ---------------------------------------------------------------------------
// Resolvent symbol
// ---------------------------------------------------------------------------

/// Smallest `|λ - p|` accepted before reporting near-singularity.
pub const NEAR_SINGULAR: f64 = 1e-14;

/// `q_λ(x, ξ) = (λ - p(x, ξ))^{-1}`, declared of order `-α`.
///
/// With a sector report the preconditions `|λ| ≥ R` and `|arg λ| ≤ δ′` are
/// enforced; without one only the near-singularity check runs.
pub fn resolvent_symbol(
    p: &SymbolField,
    lambda: C,
    sector: Option<&SectorReport>,
) -> Result<SymbolField> {
    ensure!(lambda.is_finite(), Parameter, "lambda must be finite");
    let mut order = -p.order;
    if let Some(s) = sector {
        ensure!(
            lambda.norm() >= s.r_admissible * (1.0 - 1e-12),
            Precondition,
            "|lambda| = {:.6e} below admissible R = {:.6e}",
            lambda.norm(),
            s.r_admissible
        );
        ensure!(
            lambda.arg().abs() <= s.delta_prime + 1e-12,
            Precondition,
            "arg lambda = {:.6} outside the sector of half-angle {:.6}",
            lambda.arg(),
            s.delta_prime
        );
        order = -s.alpha;
    }
    let (dmin, at) = (0..p.len())
        .into_par_iter()
        .map(|i| {
            p.row(i)
                .iter()
                .enumerate()
                .map(|(k, v)| ((lambda - v).norm(), (i, k)))
                .fold(
                    (f64::INFINITY, (i, 0)),
                    |a, b| if b.0 < a.0 { b } else { a },
                )
        })
        .reduce(
            || (f64::INFINITY, (0, 0)),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    if dmin < NEAR_SINGULAR {
        let x = p.grid().point(at.0);
        let xi = p.grid().freq(at.1);
        return Err(Error::NearSingular(format!(
            "|lambda - p| = {dmin:.3e} at x = ({:.4}, {:.4}), xi = ({:.4}, {:.4})",
            x[0], x[1], xi[0], xi[1]
        )));
    }
    Ok(SymbolField {
        grid: p.grid().clone(),
        order,
        tau: p.tau,
        budget: p.budget,
        repr: Repr::Reciprocal {
            base: Arc::new(p.clone()),
            lambda,
        },
    })
}

/// Class norms of `q_λ` along a ray `λ = f · R · e^{iθ}`.
#[derive(Debug, Clone)]
pub struct DecayScan {
    pub lambdas: Vec<C>,
    pub norms: Vec<f64>,
    /// Fitted log-log slope of norm against `|λ|`.
    pub slope: f64,
    /// Exponent `-(α - α′)/α` of the bound `C (1 + |λ|)^{-(α-α′)/α}`.
    pub predicted: f64,
}

/// Measures `‖q_λ‖_{C^τ S^{-α′}}` over `λ = f R e^{iθ}` for each factor `f`.
pub fn resolvent_decay_scan(
    p: &SymbolField,
    sector: &SectorReport,
    factors: &[f64],
    angle: f64,
    alpha_prime: f64,
) -> Result<DecayScan> {
    ensure!(
        factors.len() >= 2,
        Parameter,
        "need at least two lambda values"
    );
    let mut lambdas = vec![];
    let mut norms = vec![];
    for &f in factors {
        let lambda = C::from_polar(f * sector.r_admissible, angle);
        let q = resolvent_symbol(p, lambda, Some(sector))?;
        norms.push(symbol_class_norm(&q, -alpha_prime)?);
        lambdas.push(lambda);
    }
    let mags: Vec<f64> = lambdas.iter().map(|l| l.norm()).collect();
    let slope = loglog_slope(&mags, &norms);
    Ok(DecayScan {
        lambdas,
        norms,
        slope,
        predicted: -(sector.alpha - alpha_prime) / sector.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Coefficient;

    fn quad_oracle<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn zero_frequency_gives_zero() {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, Coefficient::Constant(1.0)).unwrap();
        let g = TorusGrid::new(1, 1.0, 16).unwrap();
        let p = compute_symbol(&spec, &g).unwrap();
        for i in 0..g.len() {
            assert_eq!(p.value(i, 0), C::new(0.0, 0.0));
        }
    }

    #[test]
    fn oscillatory_tail_series_matches_quadrature() {
        // Truncated integral plus an analytic remainder far out as oracle.
        let (w, r, s) = (3.0, 20.0, 2.0);
        let v = oscillatory_tail(w, r, s);
        let re = quad_oracle(|t| (w * t).cos() * t.powf(-s), r, 2000.0, 2_000_000);
        let far = oscillatory_tail(w, 2000.0, s).re;
        assert!(
            (v.re - (re + far)).abs() < 1e-10,
            "{} vs {}",
            v.re,
            re + far
        );
    }

    #[test]
    fn odd_series_matches_direct_form() {
        for &s in &[0.49f64, 0.3, -0.2] {
            assert!((odd_part(s, true) - (s.sin() - s)).abs() < 1e-15);
        }
    }

    #[test]
    fn richardson_is_exact_on_quartics() {
        for order in 0..=3 {
            let st = richardson_stencil(order);
            for p in 0..=4usize {
                let v: f64 = st
                    .iter()
                    .map(|&(o, w)| w * (1.3 + o as f64).powi(p as i32))
                    .sum();
                let mut exact = 1.0;
                for j in 0..order {
                    exact *= (p as i64 - j as i64) as f64;
                }
                let exact = if order > p {
                    0.0
                } else {
                    exact * 1.3f64.powi((p - order) as i32)
                };
                assert!(
                    (v - exact).abs() < 1e-9,
                    "order {order} power {p}: {v} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn ray_ratio_matches_brute_force() {
        let cases = [
            (C::new(-3.0, 1.0), 2.0, 1.5),
            (C::new(-0.5, -2.0), 1.0, 0.0),
            (C::new(-10.0, 0.0), 4.0, 0.3),
        ];
        for &(p, a, tmin) in &cases {
            for &phi in &[-2.0, 0.0, 1.9] {
                let mut brute = f64::INFINITY;
                let far = (0..400).map(|j| 200.0 * 1.05f64.powi(j));
                for t in (0..200_000).map(|j| tmin + j as f64 * 1e-3).chain(far) {
                    brute = brute.min((C::from_polar(t, phi) - p).norm() / t.max(a));
                }
                let v = ray_ratio(p, phi, a, tmin);
                assert!(v <= brute + 1e-12 && v >= brute - 2e-3, "{v} vs {brute}");
            }
        }
    }
}
