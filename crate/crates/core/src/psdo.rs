//! Pseudodifferential operators on torus grids and the direct quadrature
//! form of `L`.

use crate::error::{ensure, Error, Result};
use crate::grid::{GridFunction, Space, TorusGrid};
use crate::kernel::{KernelSpec, Profile, Term};
use crate::quadrature::Rule;
use crate::special::{j0_minus_one, j1_minus_linear};
use crate::symbol::SymbolField;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;

type C = Complex64;

fn check_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    ensure!(a == b, Parameter, "grid mismatch: {a:?} vs {b:?}");
    Ok(())
}

/// Per-axis table `e^{i x_j ξ_k}` for `j, k < N`.
fn phase_table(grid: &TorusGrid) -> Vec<C> {
    let m = grid.npts();
    let roots: Vec<C> = (0..m)
        .map(|q| C::from_polar(1.0, 2.0 * PI * q as f64 / m as f64))
        .collect();
    let mut t = vec![C::new(0.0, 0.0); m * m];
    for j in 0..m {
        for k in 0..m {
            let s = grid.signed_index(k);
            let sign = if s.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let q = (j as i64 * s).rem_euclid(m as i64) as usize;
            t[j * m + k] = roots[q] * sign;
        }
    }
    t
}

/// `p(x, D) f(x) = Σ_ξ e^{ix·ξ} p(x, ξ) f̂(ξ)`.
///
/// Separable symbols use one inverse FFT per term; other symbols are
/// summed directly in `O(N_x · N_ξ)`.
pub fn apply_xform(p: &SymbolField, f: &GridFunction) -> Result<GridFunction> {
    check_grid(p.grid(), &f.grid)?;
    let grid = p.grid();
    let fh = f.to_frequency().values;
    if let Some(terms) = p.separable_terms() {
        let mut out = vec![C::new(0.0, 0.0); grid.len()];
        for t in terms {
            let prod: Vec<C> = fh.iter().zip(&t.multiplier).map(|(a, b)| a * b).collect();
            let v = grid.inverse(&prod);
            out.iter_mut()
                .zip(v.iter().zip(&t.coefficient))
                .for_each(|(o, (v, c))| *o += v * c);
        }
        return GridFunction::from_values(grid, out);
    }
    apply_xform_direct(p, f)
}

/// Direct-summation x-form, used for non-separable symbols and as a
/// reference for the separable path.
pub fn apply_xform_direct(p: &SymbolField, f: &GridFunction) -> Result<GridFunction> {
    check_grid(p.grid(), &f.grid)?;
    let grid = p.grid();
    let fh = f.to_frequency().values;
    let table = phase_table(grid);
    let m = grid.npts();
    let n = grid.dim();
    let out: Vec<C> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let row = p.row(i);
            let ij = grid.unflatten(i);
            if n == 1 {
                let ph = &table[ij[0] * m..(ij[0] + 1) * m];
                row.iter()
                    .zip(&fh)
                    .zip(ph)
                    .map(|((a, b), e)| a * b * e)
                    .sum()
            } else {
                let ph0 = &table[ij[0] * m..(ij[0] + 1) * m];
                let ph1 = &table[ij[1] * m..(ij[1] + 1) * m];
                let mut acc = C::new(0.0, 0.0);
                for k0 in 0..m {
                    let base = k0 * m;
                    let inner: C = (0..m)
                        .map(|k1| row[base + k1] * fh[base + k1] * ph1[k1])
                        .sum();
                    acc += inner * ph0[k0];
                }
                acc
            }
        })
        .collect();
    GridFunction::from_values(grid, out)
}

/// `q(D, x) f = F^{-1}[ξ ↦ N^{-n} Σ_y e^{-iy·ξ} q(y, ξ) f(y)]`.
pub fn apply_yform(q: &SymbolField, f: &GridFunction) -> Result<GridFunction> {
    check_grid(q.grid(), &f.grid)?;
    f.require_physical()?;
    let grid = q.grid();
    if let Some(terms) = q.separable_terms() {
        let mut g = vec![C::new(0.0, 0.0); grid.len()];
        for t in terms {
            let weighted: Vec<C> = f
                .values
                .iter()
                .zip(&t.coefficient)
                .map(|(v, c)| v * c)
                .collect();
            let h = grid.forward(&weighted);
            g.iter_mut()
                .zip(h.iter().zip(&t.multiplier))
                .for_each(|(o, (h, m))| *o += h * m);
        }
        return GridFunction::from_values(grid, grid.inverse(&g));
    }
    apply_yform_direct(q, f)
}

/// Direct-summation y-form.
pub fn apply_yform_direct(q: &SymbolField, f: &GridFunction) -> Result<GridFunction> {
    check_grid(q.grid(), &f.grid)?;
    f.require_physical()?;
    let grid = q.grid();
    let table = phase_table(grid);
    let m = grid.npts();
    let n = grid.dim();
    let len = grid.len();
    let scale = 1.0 / len as f64;
    let g = (0..len)
        .into_par_iter()
        .fold(
            || vec![C::new(0.0, 0.0); len],
            |mut acc, i| {
                let fv = f.values[i] * scale;
                if fv == C::new(0.0, 0.0) {
                    return acc;
                }
                let row = q.row(i);
                let ij = grid.unflatten(i);
                let ph0 = &table[ij[0] * m..(ij[0] + 1) * m];
                if n == 1 {
                    for k in 0..m {
                        acc[k] += row[k] * ph0[k].conj() * fv;
                    }
                } else {
                    let ph1 = &table[ij[1] * m..(ij[1] + 1) * m];
                    for k0 in 0..m {
                        let e0 = ph0[k0].conj() * fv;
                        for k1 in 0..m {
                            acc[k0 * m + k1] += row[k0 * m + k1] * ph1[k1].conj() * e0;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![C::new(0.0, 0.0); len],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    GridFunction::from_values(grid, grid.inverse(&g))
}

/// Bilinear pairing `Σ_x f(x) g(x) h^n`.
pub fn pairing(f: &GridFunction, g: &GridFunction) -> C {
    f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b)
        .sum::<C>()
        * f.grid.cell()
}

// ---------------------------------------------------------------------------
// Direct quadrature of L
// ---------------------------------------------------------------------------

/// How [`DirectOperator`] evaluates the jump integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectMode {
    /// Radial multipliers per separable kernel term, one FFT pair per term.
    Separable,
    /// Spectral shifts `f(x + y)` per quadrature node, weighted by point
    /// values `k(x, y)`.
    Generic,
}

#[derive(Debug, Clone, Copy)]
pub struct DirectOptions {
    pub rel_tol: f64,
    /// Gauss-Legendre order per panel.
    pub order: usize,
    pub max_level: usize,
    /// Small-jump truncation: integrate only over `|y| > ε`.
    pub epsilon: Option<f64>,
    /// Outer radius for the lower-order part.
    pub y_max: f64,
    pub include_principal: bool,
    pub include_lower: bool,
    pub mode: DirectMode,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            order: 10,
            max_level: 6,
            epsilon: None,
            y_max: 30.0,
            include_principal: true,
            include_lower: true,
            mode: DirectMode::Separable,
        }
    }
}

/// Graded inner panels stop at `ρ₀ 2^{-INNER_DEPTH}`; the rest is the
/// leading power law integrated exactly.
const INNER_DEPTH: i32 = 40;

struct TermRule {
    term: Term,
    rule: Rule,
    /// Radius below which the analytic remainder is used (0 if truncated).
    r0: f64,
    compensated: bool,
}

/// The operator `L` (or `L_ε`) assembled by fixed composite quadrature.
pub struct DirectOperator {
    grid: TorusGrid,
    spec: KernelSpec,
    opts: DirectOptions,
    rules: Vec<TermRule>,
    multipliers: Vec<(Vec<f64>, Vec<C>)>,
    /// Refinement level reached and the last relative change.
    pub level: usize,
    pub last_change: f64,
}

/// Angular integrals of `e^{iy·ξ} - 1 - i c ξ·y` at radius `r`:
/// returns `(even, odd)` with odd to be multiplied by `i · skew · cos φ`.
fn angular(n: usize, z: f64, compensate: bool) -> (f64, f64) {
    if n == 1 {
        let h = (0.5 * z).sin();
        let odd = if compensate {
            if z.abs() < 0.5 {
                let z2 = z * z;
                let mut term = -z * z2 / 6.0;
                let mut sum = term;
                for k in 2..12 {
                    term *= -z2 / ((2 * k) * (2 * k + 1)) as f64;
                    sum += term;
                }
                sum
            } else {
                z.sin() - z
            }
        } else {
            z.sin()
        };
        (-4.0 * h * h, 2.0 * odd)
    } else {
        let odd = if compensate {
            j1_minus_linear(z)
        } else {
            crate::special::j1(z)
        };
        (2.0 * PI * j0_minus_one(z), 2.0 * PI * odd)
    }
}

/// Leading small-radius behaviour of the angular integrals:
/// `even ≈ e_c z²`, `odd ≈ o_c z^p`.
fn angular_leading(n: usize, compensate: bool) -> (f64, f64, i32) {
    match (n, compensate) {
        (1, true) => (-1.0, -1.0 / 3.0, 3),
        (1, false) => (-1.0, 2.0, 1),
        (_, true) => (-0.5 * PI, -PI / 8.0, 3),
        (_, false) => (-0.5 * PI, PI, 1),
    }
}

fn build_rule(xi_max: f64, r_lo: f64, r_end: f64, order: usize, level: usize) -> (Rule, f64) {
    let mut rule = Rule::default();
    let split = 1usize << level;
    let rho0 = (1.0 / xi_max.max(1e-300)).min(1.0);
    let h0 = (PI / xi_max.max(1e-300)).min(0.25);
    let mut r0 = 0.0;
    let start = if r_lo > 0.0 {
        r_lo
    } else {
        rho0 * 2f64.powi(-INNER_DEPTH)
    };
    if r_lo == 0.0 {
        r0 = start;
    }
    if start < rho0 {
        let mut hi = rho0;
        while hi > start * (1.0 + 1e-12) {
            let lo = (0.5 * hi).max(start);
            rule.push_panels(lo, hi, split, order);
            hi = lo;
        }
    }
    let mut edges = vec![start.max(rho0)];
    for b in [1.0, 2.0] {
        if b > edges[0] && b < r_end {
            edges.push(b);
        }
    }
    edges.push(r_end);
    for w in edges.windows(2) {
        if w[1] > w[0] {
            let panels = ((w[1] - w[0]) / h0).ceil().max(1.0) as usize;
            rule.push_panels(w[0], w[1], panels * split, order);
        }
    }
    (rule, r0)
}

fn lattice_key(grid: &TorusGrid, v: [f64; 2]) -> u64 {
    let a = (v[0] * grid.ell()).round() as i64;
    let b = (v[1] * grid.ell()).round() as i64;
    (a * a + b * b) as u64
}

fn radial_multiplier(tr: &TermRule, n: usize, xi: f64) -> (f64, f64) {
    let p = &tr.term.profile;
    let mut even = 0.0;
    let mut odd = 0.0;
    let skew = p.skew() != 0.0;
    for (&r, &w) in tr.rule.nodes.iter().zip(&tr.rule.weights) {
        let comp = tr.compensated && r <= 2.0;
        let (e, o) = angular(n, r * xi, comp);
        let g = w * p.radial(r) * r.powi(n as i32 - 1);
        even += g * e;
        if skew {
            odd += g * o;
        }
    }
    if tr.r0 > 0.0 {
        let s = p.singular_exponent();
        let c = p.radial(tr.r0) * tr.r0.powf(s);
        let (ec, oc, op) = angular_leading(n, tr.compensated);
        let nf = n as f64;
        even += c * ec * xi * xi * tr.r0.powf(nf + 2.0 - s) / (nf + 2.0 - s);
        if skew {
            let e = nf - 1.0 - s + op as f64 + 1.0;
            odd += c * oc * xi.powi(op) * tr.r0.powf(e) / e;
        }
    }
    (even, odd)
}

impl DirectOperator {
    pub fn new(spec: &KernelSpec, grid: &TorusGrid, opts: DirectOptions) -> Result<Self> {
        spec.check_ranges()?;
        ensure!(
            grid.dim() == spec.n,
            Parameter,
            "grid dimension differs from kernel dimension"
        );
        ensure!(
            matches!(spec.k1, crate::kernel::K1Family::StableLike { .. }),
            Parameter,
            "direct quadrature needs a compactly supported principal kernel"
        );
        if let Some(e) = opts.epsilon {
            ensure!(
                e > 0.0 && e < 1.0,
                Parameter,
                "truncation epsilon must lie in (0,1), got {e}"
            );
        }
        let xi_max = grid.max_freq_norm();
        let mut op = Self {
            grid: grid.clone(),
            spec: spec.clone(),
            opts,
            rules: vec![],
            multipliers: vec![],
            level: 0,
            last_change: f64::INFINITY,
        };
        let mut prev: Option<Vec<(Vec<f64>, Vec<C>)>> = None;
        for level in 0..=opts.max_level {
            op.rules = op.make_rules(xi_max, level);
            let mults = op.term_multipliers();
            if let Some(pv) = &prev {
                let scale = mults
                    .iter()
                    .flat_map(|m| m.1.iter())
                    .map(|v| v.norm())
                    .fold(0.0, f64::max);
                let diff = mults
                    .iter()
                    .zip(pv)
                    .flat_map(|(a, b)| a.1.iter().zip(&b.1).map(|(x, y)| (x - y).norm()))
                    .fold(0.0, f64::max);
                op.last_change = if scale > 0.0 { diff / scale } else { 0.0 };
                op.level = level;
                op.multipliers = mults.clone();
                if op.last_change <= opts.rel_tol {
                    return Ok(op);
                }
            } else {
                op.multipliers = mults.clone();
            }
            prev = Some(mults);
        }
        Err(Error::Quadrature(format!(
            "direct operator quadrature did not reach {:.1e} (last relative change {:.3e} at level {})",
            opts.rel_tol, op.last_change, op.level
        )))
    }

    fn make_rules(&self, xi_max: f64, level: usize) -> Vec<TermRule> {
        let r_lo = self.opts.epsilon.unwrap_or(0.0);
        let mut rules = vec![];
        let comp = self.spec.compensated();
        if self.opts.include_principal {
            for t in self.spec.k1_terms() {
                let (rule, r0) = build_rule(xi_max, r_lo, 2.0, self.opts.order, level);
                rules.push(TermRule {
                    term: t,
                    rule,
                    r0,
                    compensated: comp,
                });
            }
        }
        if self.opts.include_lower {
            for t in self.spec.k2_terms() {
                let (rule, r0) = build_rule(xi_max, r_lo, self.opts.y_max, self.opts.order, level);
                rules.push(TermRule {
                    term: t,
                    rule,
                    r0,
                    compensated: comp,
                });
            }
        }
        rules
    }

    fn term_multipliers(&self) -> Vec<(Vec<f64>, Vec<C>)> {
        let grid = &self.grid;
        let n = grid.dim();
        let mut keys: Vec<u64> = (0..grid.len())
            .flat_map(|k| grid.alias_variants(k))
            .map(|v| lattice_key(grid, v))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        self.rules
            .iter()
            .map(|tr| {
                let table: HashMap<u64, (f64, f64)> = keys
                    .par_iter()
                    .map(|&k| {
                        let xi = (k as f64).sqrt() / grid.ell();
                        (
                            k,
                            if k == 0 {
                                (0.0, 0.0)
                            } else {
                                radial_multiplier(tr, n, xi)
                            },
                        )
                    })
                    .collect();
                let skew = tr.term.profile.skew();
                let mult = grid.sample_multiplier(|v| {
                    let (e, o) = table[&lattice_key(grid, v)];
                    let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
                    let cphi = if r == 0.0 {
                        0.0
                    } else if n == 1 {
                        v[0].signum()
                    } else {
                        v[0] / r
                    };
                    C::new(e, skew * cphi * o)
                });
                let coef = (0..grid.len())
                    .map(|i| tr.term.weight * tr.term.coefficient.eval(grid.point(i)))
                    .collect();
                (coef, mult)
            })
            .collect()
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn options(&self) -> &DirectOptions {
        &self.opts
    }

    /// Number of radial quadrature nodes over all terms.
    pub fn node_count(&self) -> usize {
        self.rules.iter().map(|r| r.rule.len()).sum()
    }

    /// `(coefficient samples, multiplier)` per kernel term.
    pub fn term_tables(&self) -> &[(Vec<f64>, Vec<C>)] {
        &self.multipliers
    }

    /// Per kernel term, the term and its convolution part `M_i f` without the
    /// `x`-coefficient, so that `Lf(x) = Σ w_i c_i(x) (M_i f)(x)`.
    pub fn term_parts(&self, f: &GridFunction) -> Result<Vec<(Term, GridFunction)>> {
        check_grid(&self.grid, &f.grid)?;
        ensure!(
            self.opts.mode == DirectMode::Separable,
            Parameter,
            "term parts need the separable mode"
        );
        let fh = f.to_frequency().values;
        self.rules
            .iter()
            .zip(&self.multipliers)
            .map(|(tr, (_, mult))| {
                let prod: Vec<C> = fh.iter().zip(mult).map(|(a, b)| a * b).collect();
                Ok((
                    tr.term.clone(),
                    GridFunction::from_values(&self.grid, self.grid.inverse(&prod))?,
                ))
            })
            .collect()
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        check_grid(&self.grid, &f.grid)?;
        match self.opts.mode {
            DirectMode::Separable => self.apply_separable(f),
            DirectMode::Generic => self.apply_generic(f),
        }
    }

    fn apply_separable(&self, f: &GridFunction) -> Result<GridFunction> {
        let grid = &self.grid;
        let fh = f.to_frequency().values;
        let mut out = vec![C::new(0.0, 0.0); grid.len()];
        for (coef, mult) in &self.multipliers {
            let prod: Vec<C> = fh.iter().zip(mult).map(|(a, b)| a * b).collect();
            let v = grid.inverse(&prod);
            out.iter_mut()
                .zip(v.iter().zip(coef))
                .for_each(|(o, (v, c))| *o += v * c);
        }
        GridFunction::from_values(grid, out)
    }

    /// Per node `y`: `Σ_x k(x, y)(f(x+y) - f(x) - c y·∇f(x))` with the
    /// bracket formed spectrally so no cancellation occurs at small `|y|`.
    fn apply_generic(&self, f: &GridFunction) -> Result<GridFunction> {
        let grid = &self.grid;
        let n = grid.dim();
        let fh = f.to_frequency().values;
        let freqs: Vec<[f64; 2]> = (0..grid.len()).map(|k| grid.freq(k)).collect();
        let points: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.point(i)).collect();
        let xi_max = grid.max_freq_norm();
        let mut out = vec![C::new(0.0, 0.0); grid.len()];
        for tr in &self.rules {
            let is_principal = matches!(tr.term.profile, Profile::Stable { .. });
            let kernel = |x: [f64; 2], y: [f64; 2]| {
                if is_principal {
                    self.spec.k1(x, y)
                } else {
                    self.spec.k2(x, y)
                }
            };
            let mut nodes: Vec<([f64; 2], f64)> = vec![];
            for (&r, &w) in tr.rule.nodes.iter().zip(&tr.rule.weights) {
                if n == 1 {
                    nodes.push(([r, 0.0], w));
                    nodes.push(([-r, 0.0], w));
                } else {
                    let m = 2 * (r * xi_max).ceil() as usize + 24;
                    for j in 0..m {
                        let th = 2.0 * PI * j as f64 / m as f64;
                        nodes.push(([r * th.cos(), r * th.sin()], w * r * 2.0 * PI / m as f64));
                    }
                }
            }
            let contrib = nodes
                .par_iter()
                .map(|&(y, w)| {
                    let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                    let comp = tr.compensated && r <= 2.0;
                    let mult: Vec<C> = freqs
                        .iter()
                        .zip(&fh)
                        .map(|(xi, a)| {
                            let s = y[0] * xi[0] + y[1] * xi[1];
                            let h = (0.5 * s).sin();
                            let odd = if comp { s.sin() - s } else { s.sin() };
                            a * C::new(-2.0 * h * h, odd)
                        })
                        .collect();
                    let d = grid.inverse(&mult);
                    d.iter()
                        .zip(&points)
                        .map(|(v, &x)| v * (w * kernel(x, y)))
                        .collect::<Vec<C>>()
                })
                .reduce(
                    || vec![C::new(0.0, 0.0); grid.len()],
                    |mut a, b| {
                        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
            out.iter_mut().zip(&contrib).for_each(|(o, c)| *o += c);
            if tr.r0 > 0.0 {
                out.iter_mut()
                    .zip(self.generic_remainder(tr, &fh, &kernel))
                    .for_each(|(o, c)| *o += c);
            }
        }
        GridFunction::from_values(grid, out)
    }

    /// Inner remainder on `|y| < r0` from the local power-law coefficient
    /// `lim r^s k(x, ±r e₁)`.
    fn generic_remainder<K: Fn([f64; 2], [f64; 2]) -> f64>(
        &self,
        tr: &TermRule,
        fh: &[C],
        kernel: &K,
    ) -> Vec<C> {
        let grid = &self.grid;
        let n = grid.dim();
        let nf = n as f64;
        let s = tr.term.profile.singular_exponent();
        let r0 = tr.r0;
        let (ec, oc, op) = angular_leading(n, tr.compensated);
        let e_even = nf + 2.0 - s;
        let e_odd = nf + op as f64 - s;
        let even_m = grid.sample_multiplier(|v| {
            let xi2 = v[0] * v[0] + v[1] * v[1];
            C::new(ec * xi2 * r0.powf(e_even) / e_even, 0.0)
        });
        let odd_m = grid.sample_multiplier(|v| {
            let xn = (v[0] * v[0] + v[1] * v[1]).sqrt();
            // odd angular leading term carries ξ₁|ξ|^{p-1}
            C::new(0.0, oc * v[0] * xn.powi(op - 1) * r0.powf(e_odd) / e_odd)
        });
        let ev = grid.inverse(
            &fh.iter()
                .zip(&even_m)
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        );
        let od = grid.inverse(
            &fh.iter()
                .zip(&odd_m)
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        );
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                let a = kernel(x, [r0, 0.0]) * r0.powf(s);
                let b = kernel(x, [-r0, 0.0]) * r0.powf(s);
                ev[i] * (0.5 * (a + b)) + od[i] * (0.5 * (a - b))
            })
            .collect()
    }
}

/// `Lf` by direct quadrature with default options.
#[allow(non_snake_case)]
pub fn apply_L_direct(spec: &KernelSpec, f: &GridFunction) -> Result<GridFunction> {
    DirectOperator::new(spec, &f.grid, DirectOptions::default())?.apply(f)
}

/// `R_λ f = f - (λ - L)(q_λ(D, x) f)` with `L = p(x, D) + L²`.
pub fn remainder_operator_apply(
    p: &SymbolField,
    q: &SymbolField,
    lambda: C,
    lower: Option<&DirectOperator>,
    f: &GridFunction,
) -> Result<GridFunction> {
    check_grid(p.grid(), q.grid())?;
    let g = apply_yform(q, f)?;
    let lg = apply_xform(p, &g)?;
    let mut out: Vec<C> = f
        .values
        .iter()
        .zip(g.values.iter().zip(&lg.values))
        .map(|(f, (g, l))| f - lambda * g + l)
        .collect();
    if let Some(op) = lower {
        let l2 = op.apply(&g)?;
        out.iter_mut().zip(&l2.values).for_each(|(o, v)| *o += v);
    }
    let mut r = GridFunction::from_values(p.grid(), out)?;
    r.space = Space::Physical;
    Ok(r)
}

/// Gradient by spectral differentiation; one component per axis.
pub fn spectral_gradient(f: &GridFunction) -> Vec<GridFunction> {
    let grid = &f.grid;
    let fh = f.to_frequency().values;
    (0..grid.dim())
        .map(|axis| {
            let m = grid.sample_multiplier(|v| C::new(0.0, v[axis]));
            let v = grid.inverse(&fh.iter().zip(&m).map(|(a, b)| a * b).collect::<Vec<_>>());
            GridFunction {
                grid: grid.clone(),
                values: v,
                space: Space::Physical,
            }
        })
        .collect()
}
