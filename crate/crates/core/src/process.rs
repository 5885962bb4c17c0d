//! Simulation of the pure-jump process generated by `L` and statistical
//! checks of the martingale problem.
//!
//! Jumps larger than `ε` are simulated exactly by thinning a dominating
//! envelope; small jumps are dropped and, for `α ≥ 1`, replaced by the
//! compensator drift `b_ε(x) = -∫_{ε<|y|≤2} y k(x, y) dy`. The generator of
//! the simulated process is therefore `L_ε`, the direct quadrature of `L`
//! restricted to `|y| > ε`.
//!
//! Paths live on `ℝ^n`; coefficients and test functions are periodic and
//! are evaluated at the wrapped position.

use crate::cauchy::Trajectory;
use crate::error::{ensure, Error, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::kernel::{Coefficient, KernelSpec, Profile, Term};
use crate::psdo::{DirectOperator, DirectOptions};
use crate::quadrature::{adaptive_real, semi_infinite_real, KahanSum};
use crate::stats::{chi_square_sf, ks_sorted, quantile, MeanSe};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

type C = Complex64;

/// Scalar function of the state, integrated along paths.
pub type Integrand = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Tolerance on the acceptance ratio before the envelope counts as violated.
const ENVELOPE_SLACK: f64 = 1e-12;

/// Per-path generator: stream `index` of ChaCha8 keyed by the master seed.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sphere_area(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

/// `∫_{S^{n-1}} θ₁² dσ`.
fn sphere_second_moment(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        PI
    }
}

fn norm(y: [f64; 2]) -> f64 {
    (y[0] * y[0] + y[1] * y[1]).sqrt()
}

// ---------------------------------------------------------------------------
// Fast evaluation helpers
// ---------------------------------------------------------------------------

/// Coefficient with the octave constants precomputed.
#[derive(Debug, Clone)]
enum FastCoef {
    Constant(f64),
    Lacunary {
        mean: f64,
        scale: f64,
        ell: f64,
        modes: Vec<(f64, f64, f64)>,
    },
    Step {
        low: f64,
        high: f64,
        at: f64,
    },
}

impl FastCoef {
    fn new(c: &Coefficient) -> Self {
        match *c {
            Coefficient::Constant(v) => FastCoef::Constant(v),
            Coefficient::Lacunary {
                mean,
                spread,
                tau,
                octaves,
                ell,
                phase,
            } => {
                let amps: Vec<f64> = (0..octaves).map(|k| 2f64.powf(-(k as f64) * tau)).collect();
                let s: f64 = amps.iter().sum();
                let modes = (0..octaves)
                    .map(|k| {
                        (
                            amps[k],
                            2f64.powi(k as i32),
                            phase + k as f64 * 2.399_963_229_728_653,
                        )
                    })
                    .collect();
                FastCoef::Lacunary {
                    mean,
                    scale: if s == 0.0 { 0.0 } else { spread / s },
                    ell,
                    modes,
                }
            }
            Coefficient::Step { low, high, at } => FastCoef::Step { low, high, at },
        }
    }

    fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            FastCoef::Constant(v) => *v,
            FastCoef::Lacunary {
                mean,
                scale,
                ell,
                modes,
            } => {
                let t = (x[0] + x[1]) / ell;
                mean + scale
                    * modes
                        .iter()
                        .map(|&(a, f, p)| a * (f * t + p).cos())
                        .sum::<f64>()
            }
            FastCoef::Step { low, high, at } => {
                if x[0] < *at {
                    *low
                } else {
                    *high
                }
            }
        }
    }
}

/// Periodic piecewise-cubic interpolant of a real grid function after
/// spectral upsampling.
#[derive(Debug, Clone)]
pub struct Interpolant {
    n: usize,
    npts: usize,
    x0: f64,
    h: f64,
    values: Vec<f64>,
}

impl Interpolant {
    /// Zero-pads the spectrum by `factor` (Nyquist bins split symmetrically)
    /// and keeps the real part.
    pub fn new(f: &GridFunction, factor: usize) -> Result<Self> {
        ensure!(
            factor >= 1 && factor.is_power_of_two(),
            Parameter,
            "upsampling factor must be a power of two"
        );
        let g = &f.grid;
        let fine = TorusGrid::new(g.dim(), g.ell(), g.npts() * factor)?;
        let coarse = f.to_frequency();
        let m = fine.npts() as i64;
        let mut spec = vec![C::new(0.0, 0.0); fine.len()];
        for (idx, v) in coarse.values.iter().enumerate() {
            let vars = g.alias_variants(idx);
            let w = 1.0 / vars.len() as f64;
            for xi in vars {
                let k0 = ((xi[0] * g.ell()).round() as i64).rem_euclid(m) as usize;
                let k1 = ((xi[1] * g.ell()).round() as i64).rem_euclid(m) as usize;
                let fi = if g.dim() == 1 {
                    k0
                } else {
                    fine.flatten([k0, k1])
                };
                spec[fi] += v * w;
            }
        }
        let values = fine.inverse(&spec).iter().map(|z| z.re).collect();
        Ok(Self {
            n: g.dim(),
            npts: fine.npts(),
            x0: fine.coord_1d(0),
            h: fine.spacing(),
            values,
        })
    }

    fn stencil(&self, x: f64) -> ([usize; 4], [f64; 4]) {
        let u = (x - self.x0) / self.h;
        let i = u.floor();
        let t = u - i;
        let m = self.npts as i64;
        let i = i as i64;
        let idx = [0, 1, 2, 3].map(|k| (i - 1 + k).rem_euclid(m) as usize);
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        (idx, w)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let (ia, wa) = self.stencil(x[0]);
        if self.n == 1 {
            return (0..4).map(|k| wa[k] * self.values[ia[k]]).sum();
        }
        let (ib, wb) = self.stencil(x[1]);
        let mut s = 0.0;
        for a in 0..4 {
            let row = ia[a] * self.npts;
            let r: f64 = (0..4).map(|b| wb[b] * self.values[row + ib[b]]).sum();
            s += wa[a] * r;
        }
        s
    }
}

/// `Σ_i w_i c_i(x) (M_i f)(x)` evaluated off-grid: smooth convolution parts
/// are interpolated, Hölder coefficients evaluated exactly.
#[derive(Debug, Clone)]
pub struct GeneratorField {
    parts: Vec<(f64, FastCoef, Interpolant)>,
}

impl GeneratorField {
    pub fn new(op: &DirectOperator, f: &GridFunction, factor: usize) -> Result<Self> {
        let parts = op
            .term_parts(f)?
            .into_iter()
            .map(|(t, g)| {
                Ok((
                    t.weight,
                    FastCoef::new(&t.coefficient),
                    Interpolant::new(&g, factor)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts })
    }

    /// Field of `(A - B) f` for two operators with matching term lists.
    pub fn difference(
        a: &DirectOperator,
        b: &DirectOperator,
        f: &GridFunction,
        factor: usize,
    ) -> Result<Self> {
        let pa = a.term_parts(f)?;
        let pb = b.term_parts(f)?;
        ensure!(
            pa.len() == pb.len(),
            Parameter,
            "operators have different term lists"
        );
        let parts = pa
            .into_iter()
            .zip(pb)
            .map(|((t, ga), (_, gb))| {
                Ok((
                    t.weight,
                    FastCoef::new(&t.coefficient),
                    Interpolant::new(&ga.sub(&gb), factor)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts })
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.parts
            .iter()
            .map(|(w, c, i)| w * c.eval(x) * i.eval(x))
            .sum()
    }
}

fn default_factor(n: usize) -> usize {
    if n == 1 {
        16
    } else {
        8
    }
}

// ---------------------------------------------------------------------------
// Envelope and scheme
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Radial {
    /// Density `r^{-n-beta}` on `(lo, hi]`.
    Power { beta: f64, lo: f64, hi: f64 },
    /// Density `e^{-r}` on `(lo, ∞)`.
    Exp { lo: f64 },
}

#[derive(Debug, Clone)]
struct Piece {
    term: usize,
    height: f64,
    radial: Radial,
    rate: f64,
}

/// Dominating jump intensity `Σ W_i ρ_i(|y|)`, one radial piece per range
/// of each kernel term.
#[derive(Debug, Clone)]
pub struct Envelope {
    n: usize,
    terms: Vec<Term>,
    coefs: Vec<FastCoef>,
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Envelope {
    pub fn new(spec: &KernelSpec, epsilon: f64) -> Result<Self> {
        spec.check_ranges()?;
        ensure!(
            epsilon > 0.0 && epsilon < 1.0,
            Parameter,
            "epsilon must lie in (0,1), got {epsilon}"
        );
        let n = spec.n;
        let nf = n as f64;
        let terms: Vec<Term> = spec
            .k1_terms()
            .into_iter()
            .chain(spec.k2_terms())
            .filter(|t| t.weight != 0.0)
            .collect();
        let mut pieces = vec![];
        for (i, t) in terms.iter().enumerate() {
            let csup = t
                .coefficient
                .bounds()
                .1
                .abs()
                .max(t.coefficient.bounds().0.abs());
            let w = t.weight.abs() * csup;
            match t.profile {
                Profile::Stable {
                    alpha,
                    skew,
                    cutoff,
                    ..
                } => {
                    let hi = if cutoff { 2.0 } else { f64::INFINITY };
                    pieces.push((
                        i,
                        w * (1.0 + skew.abs()),
                        Radial::Power {
                            beta: alpha,
                            lo: epsilon,
                            hi,
                        },
                    ));
                }
                Profile::ExpTail { .. } => pieces.push((i, w, Radial::Exp { lo: epsilon })),
                Profile::SingularExp { alpha_prime, .. } => {
                    let mid = epsilon.max(1.0);
                    if mid > epsilon {
                        pieces.push((
                            i,
                            w,
                            Radial::Power {
                                beta: alpha_prime,
                                lo: epsilon,
                                hi: mid,
                            },
                        ));
                    }
                    pieces.push((i, w, Radial::Exp { lo: mid }));
                }
            }
        }
        let pieces: Vec<Piece> = pieces
            .into_iter()
            .map(|(term, height, radial)| {
                let mass = match radial {
                    Radial::Power { beta, lo, hi } => {
                        if beta == 0.0 {
                            (hi / lo).ln()
                        } else {
                            (lo.powf(-beta) - hi.powf(-beta)) / beta
                        }
                    }
                    Radial::Exp { lo } => {
                        if n == 1 {
                            (-lo).exp()
                        } else {
                            (-lo).exp() * (1.0 + lo)
                        }
                    }
                };
                Piece {
                    term,
                    height,
                    radial,
                    rate: height * sphere_area(n) * mass,
                }
            })
            .filter(|p| p.rate > 0.0)
            .collect();
        ensure!(
            pieces.iter().all(|p| p.rate.is_finite()),
            Parameter,
            "envelope has infinite mass (nf = {nf})"
        );
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            acc += p.rate;
            cumulative.push(acc);
        }
        let coefs = terms
            .iter()
            .map(|t| FastCoef::new(&t.coefficient))
            .collect();
        Ok(Self {
            n,
            terms,
            coefs,
            pieces,
            cumulative,
            total: acc,
        })
    }

    /// Total proposal rate `Λ_ε`.
    pub fn rate(&self) -> f64 {
        self.total
    }

    fn density(&self, piece: &Piece, r: f64) -> f64 {
        let nf = self.n as f64;
        piece.height
            * match piece.radial {
                Radial::Power { beta, .. } => r.powf(-nf - beta),
                Radial::Exp { .. } => (-r).exp(),
            }
    }

    /// Envelope value at `y` (sum over the pieces covering `|y|`).
    pub fn value(&self, y: [f64; 2]) -> f64 {
        let r = norm(y);
        self.pieces
            .iter()
            .filter(|p| Self::covers(p, r))
            .map(|p| self.density(p, r))
            .sum()
    }

    fn covers(p: &Piece, r: f64) -> bool {
        match p.radial {
            Radial::Power { lo, hi, .. } => r > lo && r <= hi,
            Radial::Exp { lo } => r > lo,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (usize, [f64; 2]) {
        let u = rng.random::<f64>() * self.total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[k];
        let v = 1.0 - rng.random::<f64>();
        let r = match p.radial {
            Radial::Power { beta, lo, hi } => {
                if beta == 0.0 {
                    lo * (hi / lo).powf(v)
                } else {
                    let a = lo.powf(-beta);
                    let b = hi.powf(-beta);
                    (b + v * (a - b)).powf(-1.0 / beta)
                }
            }
            Radial::Exp { lo } => {
                let e: f64 = Exp1.sample(rng);
                if self.n == 1 || rng.random::<f64>() * (1.0 + lo) < lo {
                    lo + e
                } else {
                    let e2: f64 = Exp1.sample(rng);
                    lo + e + e2
                }
            }
        };
        let y = if self.n == 1 {
            [if rng.random::<bool>() { r } else { -r }, 0.0]
        } else {
            let th = 2.0 * PI * rng.random::<f64>();
            [r * th.cos(), r * th.sin()]
        };
        (k, y)
    }

    /// Acceptance ratio `k_term(x, y) / envelope_piece(y)`.
    fn ratio(&self, piece: usize, x: [f64; 2], y: [f64; 2]) -> f64 {
        let p = &self.pieces[piece];
        let t = &self.terms[p.term];
        let k = t.weight * self.coefs[p.term].eval(x) * t.profile.eval(y);
        k / self.density(p, norm(y))
    }

    /// Largest ratio `k(x, y) / envelope(y)` over the sample grid; above one
    /// is an envelope violation.
    pub fn certify(&self, spec: &KernelSpec, xs: &[[f64; 2]], ys: &[[f64; 2]]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &x in xs {
            for &y in ys {
                let r = norm(y);
                let env = self.value(y);
                if r == 0.0 || env == 0.0 {
                    continue;
                }
                let k = crate::kernel::eval_kernel(spec, x, y)?;
                let q = k / env;
                ensure!(
                    q <= 1.0 + ENVELOPE_SLACK,
                    Envelope,
                    "kernel {k:.6e} exceeds envelope {env:.6e} at x = {x:?}, y = {y:?}"
                );
                worst = worst.max(q);
            }
        }
        Ok(worst)
    }
}

/// Truncation scheme parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScheme {
    pub epsilon: f64,
    /// Compensator drift on (`α ≥ 1`).
    pub compensate: bool,
    pub drift_dt: f64,
    /// Paths exceeding this many accepted jumps are excluded.
    pub max_jumps: usize,
}

impl SimScheme {
    pub fn for_spec(spec: &KernelSpec, epsilon: f64) -> Self {
        Self {
            epsilon,
            compensate: spec.compensated(),
            drift_dt: 1e-3,
            max_jumps: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            Parameter,
            "epsilon must lie in (0,1), got {}",
            self.epsilon
        );
        ensure!(
            self.drift_dt > 0.0,
            Parameter,
            "drift sub-step must be positive"
        );
        ensure!(
            self.max_jumps >= 1,
            Parameter,
            "max_jumps must be at least 1"
        );
        Ok(())
    }
}

/// Per-term drift constants `B_i` with `b_ε(x) = -Σ B_i c_i(x) e₁`.
fn drift_constants(spec: &KernelSpec, scheme: &SimScheme) -> Vec<(f64, FastCoef)> {
    if !scheme.compensate {
        return vec![];
    }
    spec.k1_terms()
        .into_iter()
        .filter_map(|t| match t.profile {
            Profile::Stable {
                n,
                alpha,
                skew,
                cutoff: true,
            } if skew != 0.0 => {
                let (i, _, _) = adaptive_real(
                    |r| r.powf(-alpha) * crate::kernel::cutoff(r),
                    &[scheme.epsilon, 1.0, 2.0],
                    1e-13,
                    0.0,
                    2000,
                );
                Some((
                    t.weight * skew * sphere_second_moment(n) * i,
                    FastCoef::new(&t.coefficient),
                ))
            }
            _ => None,
        })
        .collect()
}

/// Initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point([f64; 2]),
    /// Path `i` starts at `points[i % len]`.
    Points(Vec<[f64; 2]>),
    /// Independent coordinates.
    Product(Vec<Marginal>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Dirac(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl InitialLaw {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialLaw::Point(_) => {}
            InitialLaw::Points(p) => ensure!(!p.is_empty(), Parameter, "empty probe set"),
            InitialLaw::Product(m) => {
                ensure!(
                    m.len() == n,
                    Parameter,
                    "need {n} marginals, got {}",
                    m.len()
                );
                for mm in m {
                    match *mm {
                        Marginal::Uniform { lo, hi } => {
                            ensure!(hi > lo, Parameter, "uniform marginal needs hi > lo")
                        }
                        Marginal::Normal { sd, .. } => {
                            ensure!(sd > 0.0, Parameter, "normal marginal needs sd > 0")
                        }
                        Marginal::Dirac(_) => {}
                    }
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, index: usize, rng: &mut R) -> [f64; 2] {
        match self {
            InitialLaw::Point(x) => *x,
            InitialLaw::Points(p) => p[index % p.len()],
            InitialLaw::Product(m) => {
                let mut x = [0.0; 2];
                for (a, mm) in m.iter().enumerate() {
                    x[a] = match *mm {
                        Marginal::Dirac(v) => v,
                        Marginal::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                        Marginal::Normal { mean, sd } => {
                            Normal::new(mean, sd).expect("validated").sample(rng)
                        }
                    };
                }
                x
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

/// One accepted jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub pre: [f64; 2],
    pub post: [f64; 2],
}

/// A single recorded path: initial point, jump events and terminal state.
/// Between records the path moves along the drift.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    pub x0: [f64; 2],
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
    pub terminal: [f64; 2],
}

/// What to record besides terminal states.
#[derive(Clone, Default)]
pub struct SimRequest {
    /// Sorted times in `(0, T]`; `T` is appended when missing.
    pub checkpoints: Vec<f64>,
    /// `(label, g)`; `∫_0^t g(Π_s) ds` is stored at every checkpoint.
    pub integrands: Vec<(String, Integrand)>,
    pub record_paths: bool,
}

/// Ensemble of simulated paths with scheme metadata and RNG provenance.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub spec: KernelSpec,
    pub initial: InitialLaw,
    pub horizon: f64,
    pub scheme: SimScheme,
    pub seed: u64,
    pub n_paths: usize,
    pub checkpoints: Vec<f64>,
    pub integrand_labels: Vec<String>,
    /// Path indices that were delivered, ascending.
    pub delivered: Vec<usize>,
    pub excluded: usize,
    pub x0: Vec<[f64; 2]>,
    /// `states[p * n_checkpoints + k]`.
    pub states: Vec<[f64; 2]>,
    /// `integrals[(p * n_integrands + j) * n_checkpoints + k]`.
    pub integrals: Vec<f64>,
    pub jumps: Vec<u32>,
    pub paths: Option<Vec<StepPath>>,
    pub proposals: u64,
    pub accepted: u64,
    /// `Σ` of acceptance ratios and of `ratio (1 - ratio)` over proposals.
    pub ratio_sum: f64,
    pub ratio_var_sum: f64,
    pub proposal_rate: f64,
}

struct PathOutcome {
    x0: [f64; 2],
    states: Vec<[f64; 2]>,
    integrals: Vec<f64>,
    jumps: u32,
    proposals: u64,
    ratio_sum: f64,
    ratio_var_sum: f64,
    path: Option<StepPath>,
    excluded: bool,
}

struct Simulator<'a> {
    env: &'a Envelope,
    drift: Vec<(f64, FastCoef)>,
    scheme: &'a SimScheme,
    checkpoints: &'a [f64],
    integrands: Vec<Integrand>,
    record: bool,
    initial: &'a InitialLaw,
    seed: u64,
    horizon: f64,
}

impl Simulator<'_> {
    fn drift(&self, x: [f64; 2]) -> f64 {
        -self.drift.iter().map(|(b, c)| b * c.eval(x)).sum::<f64>()
    }

    fn eval_integrands(&self, x: [f64; 2], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.integrands) {
            *o = g(x);
        }
    }

    /// Moves from `t0` to `t1` along the drift, accumulating integrals.
    fn advance(
        &self,
        x: &mut [f64; 2],
        g: &mut [f64],
        acc: &mut [f64],
        h: f64,
        scratch: &mut [f64],
    ) {
        if h <= 0.0 {
            return;
        }
        if self.drift.is_empty() {
            acc.iter_mut().zip(g.iter()).for_each(|(a, v)| *a += h * v);
            return;
        }
        let m = (h / self.scheme.drift_dt).ceil().max(1.0) as usize;
        let dh = h / m as f64;
        for _ in 0..m {
            x[0] += self.drift(*x) * dh;
            self.eval_integrands(*x, scratch);
            for ((a, v), w) in acc.iter_mut().zip(g.iter_mut()).zip(scratch.iter()) {
                *a += 0.5 * dh * (*v + w);
                *v = *w;
            }
        }
    }

    fn run(&self, index: usize) -> Result<PathOutcome> {
        let mut rng = path_rng(self.seed, index as u64);
        let x0 = self.initial.sample(index, &mut rng);
        let ni = self.integrands.len();
        let nc = self.checkpoints.len();
        let mut x = x0;
        let mut g = vec![0.0; ni];
        let mut scratch = vec![0.0; ni];
        let mut acc = vec![0.0; ni];
        self.eval_integrands(x, &mut g);
        let mut states = Vec::with_capacity(nc);
        let mut integrals = vec![0.0; ni * nc];
        let mut events = vec![];
        let (mut jumps, mut proposals) = (0u32, 0u64);
        let (mut rs, mut rvs) = (KahanSum::default(), KahanSum::default());
        let lam = self.env.rate();
        let draw_gap = |rng: &mut ChaCha8Rng| -> f64 {
            if lam > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / lam
            } else {
                f64::INFINITY
            }
        };
        let mut t = 0.0;
        let mut next = draw_gap(&mut rng);
        let mut excluded = false;
        'outer: for (k, &ck) in self.checkpoints.iter().enumerate() {
            loop {
                if next >= ck {
                    self.advance(&mut x, &mut g, &mut acc, ck - t, &mut scratch);
                    t = ck;
                    break;
                }
                self.advance(&mut x, &mut g, &mut acc, next - t, &mut scratch);
                t = next;
                proposals += 1;
                let (piece, y) = self.env.sample(&mut rng);
                let q = self.env.ratio(piece, x, y);
                if q > 1.0 + ENVELOPE_SLACK || q < -ENVELOPE_SLACK || !q.is_finite() {
                    return Err(Error::Envelope(format!(
                        "acceptance ratio {q:.6e} at x = {x:?}, y = {y:?}"
                    )));
                }
                let q = q.clamp(0.0, 1.0);
                rs.add(q);
                rvs.add(q * (1.0 - q));
                if rng.random::<f64>() < q {
                    let pre = x;
                    x = [x[0] + y[0], x[1] + y[1]];
                    jumps += 1;
                    self.eval_integrands(x, &mut g);
                    if self.record {
                        events.push(JumpEvent {
                            time: t,
                            pre,
                            post: x,
                        });
                    }
                    if jumps as usize > self.scheme.max_jumps {
                        excluded = true;
                        break 'outer;
                    }
                }
                next = t + draw_gap(&mut rng);
            }
            states.push(x);
            for j in 0..ni {
                integrals[j * nc + k] = acc[j];
            }
        }
        let path = if self.record && !excluded {
            Some(StepPath {
                x0,
                events,
                horizon: self.horizon,
                terminal: x,
            })
        } else {
            None
        };
        Ok(PathOutcome {
            x0,
            states,
            integrals,
            jumps,
            proposals,
            ratio_sum: rs.value(),
            ratio_var_sum: rvs.value(),
            path,
            excluded,
        })
    }
}

fn certification_samples(n: usize, epsilon: f64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let xs: Vec<[f64; 2]> = (0..64)
        .map(|i| {
            let a = -PI + 2.0 * PI * (i as f64 + 0.37) / 64.0;
            if n == 1 {
                [a, 0.0]
            } else {
                [a, -PI + 2.0 * PI * ((i * 29 % 64) as f64 + 0.61) / 64.0]
            }
        })
        .collect();
    let mut ys = vec![];
    for k in 0..48 {
        let r = epsilon * 1.001 * (40.0 / epsilon).powf(k as f64 / 47.0);
        if n == 1 {
            ys.push([r, 0.0]);
            ys.push([-r, 0.0]);
        } else {
            for a in 0..6 {
                let th = 2.0 * PI * a as f64 / 6.0 + 0.1;
                ys.push([r * th.cos(), r * th.sin()]);
            }
        }
    }
    (xs, ys)
}

/// Simulates `n_paths` paths to time `horizon`, recording terminal states.
pub fn simulate_paths(
    spec: &KernelSpec,
    initial: &InitialLaw,
    horizon: f64,
    scheme: &SimScheme,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate_paths_with(
        spec,
        initial,
        horizon,
        scheme,
        n_paths,
        seed,
        &SimRequest::default(),
    )
}

/// [`simulate_paths`] with checkpoints, path integrals and optional event
/// records.
pub fn simulate_paths_with(
    spec: &KernelSpec,
    initial: &InitialLaw,
    horizon: f64,
    scheme: &SimScheme,
    n_paths: usize,
    seed: u64,
    request: &SimRequest,
) -> Result<PathEnsemble> {
    spec.check_ranges()?;
    scheme.validate()?;
    initial.validate(spec.n)?;
    ensure!(n_paths >= 1, Parameter, "n_paths must be at least 1");
    ensure!(
        horizon > 0.0 && horizon.is_finite(),
        Parameter,
        "horizon must be positive"
    );
    ensure!(
        scheme.compensate == spec.compensated(),
        Parameter,
        "compensator flag must be on exactly when alpha >= 1"
    );
    let mut checkpoints = request.checkpoints.clone();
    ensure!(
        checkpoints.iter().all(|&c| c > 0.0 && c <= horizon)
            && checkpoints.windows(2).all(|w| w[0] < w[1]),
        Parameter,
        "checkpoints must be increasing within (0, T]"
    );
    if checkpoints.last() != Some(&horizon) {
        checkpoints.push(horizon);
    }
    let env = Envelope::new(spec, scheme.epsilon)?;
    let (xs, ys) = certification_samples(spec.n, scheme.epsilon);
    env.certify(spec, &xs, &ys)?;
    let sim = Simulator {
        env: &env,
        drift: drift_constants(spec, scheme),
        scheme,
        checkpoints: &checkpoints,
        integrands: request.integrands.iter().map(|(_, g)| g.clone()).collect(),
        record: request.record_paths,
        initial,
        seed,
        horizon,
    };
    let outcomes: Vec<PathOutcome> = (0..n_paths)
        .into_par_iter()
        .map(|i| sim.run(i))
        .collect::<Result<_>>()?;
    let nc = checkpoints.len();
    let ni = request.integrands.len();
    let mut ens = PathEnsemble {
        spec: spec.clone(),
        initial: initial.clone(),
        horizon,
        scheme: scheme.clone(),
        seed,
        n_paths,
        checkpoints,
        integrand_labels: request.integrands.iter().map(|(l, _)| l.clone()).collect(),
        delivered: Vec::with_capacity(n_paths),
        excluded: 0,
        x0: Vec::with_capacity(n_paths),
        states: Vec::with_capacity(n_paths * nc),
        integrals: Vec::with_capacity(n_paths * nc * ni),
        jumps: Vec::with_capacity(n_paths),
        paths: if request.record_paths {
            Some(vec![])
        } else {
            None
        },
        proposals: 0,
        accepted: 0,
        ratio_sum: 0.0,
        ratio_var_sum: 0.0,
        proposal_rate: env.rate(),
    };
    let (mut rs, mut rvs) = (KahanSum::default(), KahanSum::default());
    for (i, o) in outcomes.into_iter().enumerate() {
        ens.proposals += o.proposals;
        rs.add(o.ratio_sum);
        rvs.add(o.ratio_var_sum);
        ens.accepted += o.jumps as u64;
        if o.excluded {
            ens.excluded += 1;
            continue;
        }
        ens.delivered.push(i);
        ens.x0.push(o.x0);
        ens.states.extend(o.states);
        ens.integrals.extend(o.integrals);
        ens.jumps.push(o.jumps);
        if let (Some(p), Some(v)) = (o.path, ens.paths.as_mut()) {
            v.push(p);
        }
    }
    ens.ratio_sum = rs.value();
    ens.ratio_var_sum = rvs.value();
    Ok(ens)
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.delivered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delivered.is_empty()
    }

    /// Index of the checkpoint equal to `t`.
    pub fn checkpoint_index(&self, t: f64) -> Result<usize> {
        self.checkpoints
            .iter()
            .position(|&c| (c - t).abs() <= 1e-12 * self.horizon.max(1.0))
            .ok_or_else(|| {
                Error::Parameter(format!("time {t} is not a checkpoint of the ensemble"))
            })
    }

    /// States at time `t` (0 or a checkpoint), one per delivered path.
    pub fn states_at(&self, t: f64) -> Result<Vec<[f64; 2]>> {
        if t == 0.0 {
            return Ok(self.x0.clone());
        }
        let k = self.checkpoint_index(t)?;
        let nc = self.checkpoints.len();
        Ok((0..self.len()).map(|p| self.states[p * nc + k]).collect())
    }

    pub fn terminal(&self) -> Vec<[f64; 2]> {
        self.states_at(self.horizon)
            .expect("horizon is always a checkpoint")
    }

    fn integral(&self, p: usize, j: usize, k: usize) -> f64 {
        let nc = self.checkpoints.len();
        let ni = self.integrand_labels.len();
        self.integrals[(p * ni + j) * nc + k]
    }

    /// Accepted over proposed jumps.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// `z` of the accepted count against the summed acceptance ratios.
    pub fn acceptance_z(&self) -> f64 {
        let d = self.accepted as f64 - self.ratio_sum;
        if self.ratio_var_sum > 0.0 {
            d.abs() / self.ratio_var_sum.sqrt()
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// `path, jumps, terminal coordinates` per delivered path.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let term = self.terminal();
        if self.spec.n == 1 {
            writeln!(w, "path,jumps,x1")?;
        } else {
            writeln!(w, "path,jumps,x1,x2")?;
        }
        for (i, (&p, x)) in self.delivered.iter().zip(&term).enumerate() {
            if self.spec.n == 1 {
                writeln!(w, "{p},{},{:.17e}", self.jumps[i], x[0])?;
            } else {
                writeln!(w, "{p},{},{:.17e},{:.17e}", self.jumps[i], x[0], x[1])?;
            }
        }
        Ok(())
    }

    /// One line per jump event; needs recorded paths.
    pub fn write_events<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path,time,pre1,pre2,post1,post2")?;
        if let Some(paths) = &self.paths {
            for (&p, path) in self.delivered.iter().zip(paths) {
                for e in &path.events {
                    writeln!(
                        w,
                        "{p},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                        e.time, e.pre[0], e.pre[1], e.post[0], e.post[1]
                    )?;
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Martingale residual
// ---------------------------------------------------------------------------

/// A test function with `L_ε φ`, `(L - L_ε) φ` prepared for off-grid use.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub phi: Interpolant,
    pub l_eps: GeneratorField,
    pub small_jumps: GeneratorField,
    pub epsilon: f64,
}

pub const LABEL_L_EPS: &str = "L_eps phi";
pub const LABEL_SMALL: &str = "(L - L_eps) phi";

impl TestFunction {
    pub fn new(spec: &KernelSpec, phi: &GridFunction, epsilon: f64) -> Result<Self> {
        let grid = &phi.grid;
        let full = DirectOperator::new(spec, grid, DirectOptions::default())?;
        let trunc = DirectOperator::new(
            spec,
            grid,
            DirectOptions {
                epsilon: Some(epsilon),
                ..Default::default()
            },
        )?;
        let factor = default_factor(grid.dim());
        Ok(Self {
            phi: Interpolant::new(phi, factor)?,
            l_eps: GeneratorField::new(&trunc, phi, factor)?,
            small_jumps: GeneratorField::difference(&full, &trunc, phi, factor)?,
            epsilon,
        })
    }

    /// Integrand list expected by [`martingale_residual`].
    pub fn request(&self, checkpoints: Vec<f64>) -> SimRequest {
        let a = self.l_eps.clone();
        let b = self.small_jumps.clone();
        SimRequest {
            checkpoints,
            integrands: vec![
                (
                    LABEL_L_EPS.to_string(),
                    Arc::new(move |x| a.eval(x)) as Integrand,
                ),
                (
                    LABEL_SMALL.to_string(),
                    Arc::new(move |x| b.eval(x)) as Integrand,
                ),
            ],
            record_paths: false,
        }
    }
}

/// `Ê[(M_t - M_s) g(Π_s)]` for one checkpoint pair and one `g`.
#[derive(Debug, Clone)]
pub struct OrthogonalityStat {
    pub s: f64,
    pub t: f64,
    pub g: &'static str,
    pub stat: MeanSe,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub checkpoints: Vec<f64>,
    pub mean: Vec<MeanSe>,
    pub orthogonality: Vec<OrthogonalityStat>,
    /// Residual with `L_ε φ` scaled by `perturbation`.
    pub perturbation: f64,
    pub perturbed: Vec<MeanSe>,
    /// `Ê ∫_0^t (L - L_ε)φ(Π_s) ds`: truncation bias of the scheme.
    pub epsilon_bias: Vec<MeanSe>,
    /// Mean change of `M_t` when the drift sub-step is halved, when a drift
    /// is present.
    pub drift_bias: Option<Vec<f64>>,
    pub pass: bool,
    /// Largest `|z|` of the perturbed residual.
    pub power_z: f64,
    pub n_paths: usize,
}

impl MartingaleReport {
    pub fn max_z(&self) -> f64 {
        self.mean
            .iter()
            .map(|m| m.z())
            .chain(self.orthogonality.iter().map(|o| o.stat.z()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,s,t,g,mean,se,z")?;
        for (t, m) in self.checkpoints.iter().zip(&self.mean) {
            writeln!(
                w,
                "residual,0,{t},,{:.6e},{:.6e},{:.3}",
                m.mean,
                m.se,
                m.z()
            )?;
        }
        for o in &self.orthogonality {
            writeln!(
                w,
                "orthogonality,{},{},{},{:.6e},{:.6e},{:.3}",
                o.s,
                o.t,
                o.g,
                o.stat.mean,
                o.stat.se,
                o.stat.z()
            )?;
        }
        for (t, m) in self.checkpoints.iter().zip(&self.perturbed) {
            writeln!(
                w,
                "perturbed,0,{t},,{:.6e},{:.6e},{:.3}",
                m.mean,
                m.se,
                m.z()
            )?;
        }
        for (t, m) in self.checkpoints.iter().zip(&self.epsilon_bias) {
            writeln!(
                w,
                "epsilon_bias,0,{t},,{:.6e},{:.6e},{:.3}",
                m.mean,
                m.se,
                m.z()
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MartingaleOptions {
    pub perturbation: f64,
    /// Requested standard error of `Ê[M_T]`; larger achieved values raise an
    /// advisory error.
    pub target_se: Option<f64>,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        Self {
            perturbation: 1.2,
            target_se: None,
        }
    }
}

/// `M_t = φ(Π_t) - φ(Π_0) - ∫_0^t L_ε φ(Π_s) ds` at the ensemble
/// checkpoints, with increment-orthogonality against
/// `g ∈ {1{(Π_s - Π_0)₁ > 0}, (Π_s - Π_0)₁, φ(Π_s)}` for consecutive pairs.
pub fn martingale_residual(
    ens: &PathEnsemble,
    tf: &TestFunction,
    opts: MartingaleOptions,
) -> Result<MartingaleReport> {
    ensure!(
        ens.integrand_labels.len() >= 2
            && ens.integrand_labels[0] == LABEL_L_EPS
            && ens.integrand_labels[1] == LABEL_SMALL,
        Parameter,
        "ensemble was not simulated with the test-function integrands"
    );
    ensure!(
        (ens.scheme.epsilon - tf.epsilon).abs() < 1e-15,
        Parameter,
        "test function and scheme use different epsilon"
    );
    ensure!(
        ens.len() >= 2,
        Advisory,
        "need at least 2 delivered paths, have {}",
        ens.len()
    );
    let np = ens.len();
    let nc = ens.checkpoints.len();
    let phi0: Vec<f64> = ens.x0.iter().map(|&x| tf.phi.eval(x)).collect();
    let m = |p: usize, k: usize, scale: f64| -> f64 {
        tf.phi.eval(ens.states[p * nc + k]) - phi0[p] - scale * ens.integral(p, 0, k)
    };
    let mvals: Vec<Vec<f64>> = (0..nc)
        .map(|k| (0..np).map(|p| m(p, k, 1.0)).collect())
        .collect();
    let mean: Vec<MeanSe> = mvals.iter().map(|v| MeanSe::from_samples(v)).collect();
    let perturbed: Vec<MeanSe> = (0..nc)
        .map(|k| {
            MeanSe::from_samples(
                &(0..np)
                    .map(|p| m(p, k, opts.perturbation))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let epsilon_bias: Vec<MeanSe> = (0..nc)
        .map(|k| MeanSe::from_samples(&(0..np).map(|p| ens.integral(p, 1, k)).collect::<Vec<_>>()))
        .collect();
    let mut orthogonality = vec![];
    for k in 0..nc.saturating_sub(1) {
        let (s, t) = (ens.checkpoints[k], ens.checkpoints[k + 1]);
        let gs: [(&'static str, Box<dyn Fn(usize) -> f64>); 3] = [
            (
                "indicator",
                Box::new(|p| {
                    if ens.states[p * nc + k][0] - ens.x0[p][0] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }),
            ),
            (
                "coordinate",
                Box::new(|p| ens.states[p * nc + k][0] - ens.x0[p][0]),
            ),
            ("phi", Box::new(|p| tf.phi.eval(ens.states[p * nc + k]))),
        ];
        for (name, g) in gs.iter() {
            let v: Vec<f64> = (0..np)
                .map(|p| (mvals[k + 1][p] - mvals[k][p]) * g(p))
                .collect();
            orthogonality.push(OrthogonalityStat {
                s,
                t,
                g: name,
                stat: MeanSe::from_samples(&v),
            });
        }
    }
    if let Some(target) = opts.target_se {
        let se = mean.last().map(|m| m.se).unwrap_or(0.0);
        if se > target {
            let need = (np as f64 * (se / target).powi(2)).ceil() as u64;
            return Err(Error::Advisory(format!(
                "standard error {se:.3e} exceeds the requested {target:.3e}; about {need} paths are needed"
            )));
        }
    }
    let power_z = perturbed.iter().map(|m| m.z()).fold(0.0, f64::max);
    let mut rep = MartingaleReport {
        checkpoints: ens.checkpoints.clone(),
        mean,
        orthogonality,
        perturbation: opts.perturbation,
        perturbed,
        epsilon_bias,
        drift_bias: None,
        pass: false,
        power_z,
        n_paths: np,
    };
    rep.pass = rep.max_z() <= 3.0;
    Ok(rep)
}

/// Full martingale experiment: simulation with the test-function integrands
/// plus, when the scheme has a drift, a rerun at half the drift sub-step to
/// estimate the sub-stepping bias.
pub fn martingale_experiment(
    spec: &KernelSpec,
    initial: &InitialLaw,
    horizon: f64,
    scheme: &SimScheme,
    n_paths: usize,
    seed: u64,
    phi: &GridFunction,
    checkpoints: &[f64],
    opts: MartingaleOptions,
) -> Result<(PathEnsemble, MartingaleReport)> {
    let tf = TestFunction::new(spec, phi, scheme.epsilon)?;
    let req = tf.request(checkpoints.to_vec());
    let ens = simulate_paths_with(spec, initial, horizon, scheme, n_paths, seed, &req)?;
    let mut rep = martingale_residual(&ens, &tf, opts)?;
    if !drift_constants(spec, scheme).is_empty() {
        let fine = SimScheme {
            drift_dt: scheme.drift_dt / 2.0,
            ..scheme.clone()
        };
        let ens2 = simulate_paths_with(spec, initial, horizon, &fine, n_paths, seed, &req)?;
        let rep2 = martingale_residual(&ens2, &tf, opts)?;
        rep.drift_bias = Some(
            rep.mean
                .iter()
                .zip(&rep2.mean)
                .map(|(a, b)| a.mean - b.mean)
                .collect(),
        );
    }
    Ok((ens, rep))
}

// ---------------------------------------------------------------------------
// Law comparison
// ---------------------------------------------------------------------------

/// Distance between one-dimensional laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawStatistic {
    /// Kolmogorov-Smirnov on the first coordinate.
    KolmogorovSmirnov,
    /// Max difference of empirical characteristic-function moments
    /// `cos(ω·x)`, `sin(ω·x)` over a fixed frequency set.
    SmoothedMoments,
}

impl LawStatistic {
    pub fn for_dim(n: usize) -> Self {
        if n == 1 {
            LawStatistic::KolmogorovSmirnov
        } else {
            LawStatistic::SmoothedMoments
        }
    }
}

#[derive(Debug, Clone)]
pub struct LawComparison {
    pub statistic: LawStatistic,
    pub distance: f64,
    /// Bootstrap 99% quantile of the distance under the pooled null.
    pub null_q99: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub bootstrap: usize,
}

const MOMENT_FREQS: [[f64; 2]; 5] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0]];

fn moment_features(x: [f64; 2]) -> [f64; 10] {
    let mut out = [0.0; 10];
    for (i, w) in MOMENT_FREQS.iter().enumerate() {
        let ph = w[0] * x[0] + w[1] * x[1];
        out[2 * i] = ph.cos();
        out[2 * i + 1] = ph.sin();
    }
    out
}

fn law_distance(stat: LawStatistic, a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    match stat {
        LawStatistic::KolmogorovSmirnov => {
            let mut x: Vec<f64> = a.iter().map(|v| v[0]).collect();
            let mut y: Vec<f64> = b.iter().map(|v| v[0]).collect();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            ks_sorted(&x, &y)
        }
        LawStatistic::SmoothedMoments => {
            let mean = |s: &[[f64; 2]]| {
                let mut m = [0.0; 10];
                for &x in s {
                    m.iter_mut()
                        .zip(moment_features(x))
                        .for_each(|(a, f)| *a += f);
                }
                m.map(|v| v / s.len() as f64)
            };
            let (ma, mb) = (mean(a), mean(b));
            ma.iter()
                .zip(&mb)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        }
    }
}

/// Compares the laws of `Π_t` under two ensembles with a pooled bootstrap
/// null (`bootstrap` resamples, seeded by `seed`).
pub fn one_dim_law_compare(
    a: &PathEnsemble,
    b: &PathEnsemble,
    t: f64,
    statistic: LawStatistic,
    bootstrap: usize,
    seed: u64,
) -> Result<LawComparison> {
    ensure!(
        a.spec == b.spec,
        Parameter,
        "ensembles have different kernels"
    );
    ensure!(
        a.initial == b.initial,
        Parameter,
        "ensembles have different initial laws"
    );
    ensure!(
        (a.horizon - b.horizon).abs() <= 1e-12 * a.horizon,
        Parameter,
        "ensembles have different horizons"
    );
    ensure!(
        bootstrap >= 1,
        Parameter,
        "need at least one bootstrap resample"
    );
    let xa = a.states_at(t)?;
    let xb = b.states_at(t)?;
    ensure!(
        !xa.is_empty() && !xb.is_empty(),
        Parameter,
        "empty ensemble"
    );
    let distance = law_distance(statistic, &xa, &xb);
    let pooled: Vec<[f64; 2]> = xa.iter().chain(&xb).copied().collect();
    let (na, nb) = (xa.len(), xb.len());
    let null: Vec<f64> = (0..bootstrap)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(seed, r as u64);
            let ra: Vec<[f64; 2]> = (0..na)
                .map(|_| pooled[rng.random_range(0..pooled.len())])
                .collect();
            let rb: Vec<[f64; 2]> = (0..nb)
                .map(|_| pooled[rng.random_range(0..pooled.len())])
                .collect();
            law_distance(statistic, &ra, &rb)
        })
        .collect();
    let exceed = null.iter().filter(|&&d| d >= distance).count();
    Ok(LawComparison {
        statistic,
        distance,
        null_q99: quantile(&null, 0.99),
        p_value: (1 + exceed) as f64 / (1 + bootstrap) as f64,
        n_a: na,
        n_b: nb,
        bootstrap,
    })
}

/// Scheme-bias allowance for a distance between truncation levels
/// `target = (ε_a, ε_b)`: the distance `d_ref` measured between the
/// `reference` levels, all of it counted as bias, rescaled by the
/// `ε^{2-α}` bias law.
pub fn scheme_bias_allowance(
    alpha: f64,
    d_ref: f64,
    reference: (f64, f64),
    target: (f64, f64),
) -> f64 {
    let g = 2.0 - alpha;
    let scale = (target.0.powf(g) - target.1.powf(g)).abs()
        / (reference.0.powf(g) - reference.1.powf(g)).abs();
    d_ref * scale
}

// ---------------------------------------------------------------------------
// Monte Carlo against the evolution equation
// ---------------------------------------------------------------------------

/// Grid fields bounding the discretization bias of a PDE comparison.
#[derive(Debug, Clone)]
pub struct PdeBias {
    /// `∫_0^t (L_ε - L) u(s) ds`, the leading truncation bias of the MC mean.
    pub epsilon: GridFunction,
    /// `|u_Δt(t) - u_{2Δt}(t)|` when a coarse solve is available.
    pub dt: Option<GridFunction>,
}

/// Bias fields for comparing an `ε`-scheme with the trajectory `pde` at `t`.
pub fn pde_bias(
    spec: &KernelSpec,
    pde: &Trajectory,
    coarse: Option<&Trajectory>,
    t: f64,
    epsilon: f64,
) -> Result<PdeBias> {
    let grid = pde.states[0].grid.clone();
    let full = DirectOperator::new(spec, &grid, DirectOptions::default())?;
    let trunc = DirectOperator::new(
        spec,
        &grid,
        DirectOptions {
            epsilon: Some(epsilon),
            ..Default::default()
        },
    )?;
    let mut acc = GridFunction::zeros(&grid);
    let mut prev: Option<(f64, GridFunction)> = None;
    for (&s, u) in pde.times.iter().zip(&pde.states) {
        if s > t + 1e-12 {
            break;
        }
        let d = trunc.apply(u)?.sub(&full.apply(u)?);
        if let Some((s0, d0)) = &prev {
            acc = acc.axpy(C::new(0.5 * (s - s0), 0.0), &d0.add(&d));
        }
        prev = Some((s, d));
    }
    let dt = coarse.map(|c| {
        let diff = pde.at(t).sub(&c.at(t));
        let v = diff.values.iter().map(|z| C::new(z.norm(), 0.0)).collect();
        GridFunction::from_values(&grid, v).expect("same grid")
    });
    Ok(PdeBias { epsilon: acc, dt })
}

#[derive(Debug, Clone)]
pub struct McPdeRow {
    pub x: [f64; 2],
    pub mc: MeanSe,
    pub pde: f64,
    pub error: f64,
    pub bias_eps: f64,
    pub bias_dt: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct McPdeTable {
    pub t: f64,
    pub rows: Vec<McPdeRow>,
}

impl McPdeTable {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1,x2,mc,se,pde,error,bias_eps,bias_dt,tolerance,pass")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.8e},{:.3e},{:.8e},{:.3e},{:.3e},{:.3e},{:.3e},{}",
                r.x[0],
                r.x[1],
                r.mc.mean,
                r.mc.se,
                r.pde,
                r.error,
                r.bias_eps,
                r.bias_dt,
                r.tolerance,
                r.pass
            )?;
        }
        Ok(())
    }
}

/// Per probe point, `|Ê^x[ψ(Π_t)] - u(t, x)|` against `3·SE + |bias|`.
/// The ensemble must start from [`InitialLaw::Points`] (or a single point).
pub fn mc_vs_pde(
    ens: &PathEnsemble,
    psi: &GridFunction,
    t: f64,
    pde: &Trajectory,
    bias: Option<&PdeBias>,
) -> Result<McPdeTable> {
    let probes = match &ens.initial {
        InitialLaw::Point(x) => vec![*x],
        InitialLaw::Points(p) => p.clone(),
        InitialLaw::Product(_) => {
            return Err(Error::Parameter(
                "probe comparison needs deterministic start points".into(),
            ))
        }
    };
    let factor = default_factor(psi.grid.dim());
    let psi_i = Interpolant::new(psi, factor)?;
    let u_i = Interpolant::new(&pde.at(t), factor)?;
    let be = bias
        .map(|b| Interpolant::new(&b.epsilon, factor))
        .transpose()?;
    let bd = bias
        .and_then(|b| b.dt.as_ref())
        .map(|g| Interpolant::new(g, factor))
        .transpose()?;
    let states = ens.states_at(t)?;
    let rows = probes
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let vals: Vec<f64> = ens
                .delivered
                .iter()
                .zip(&states)
                .filter(|(&p, _)| p % probes.len() == j)
                .map(|(_, &s)| psi_i.eval(s))
                .collect();
            let mc = MeanSe::from_samples(&vals);
            let pde_v = u_i.eval(x);
            let bias_eps = be.as_ref().map(|b| b.eval(x)).unwrap_or(0.0);
            let bias_dt = bd.as_ref().map(|b| b.eval(x).abs()).unwrap_or(0.0);
            let error = (mc.mean - pde_v).abs();
            let tolerance = 3.0 * mc.se + bias_eps.abs() + bias_dt;
            McPdeRow {
                x,
                mc,
                pde: pde_v,
                error,
                bias_eps,
                bias_dt,
                tolerance,
                pass: error <= tolerance,
            }
        })
        .collect();
    Ok(McPdeTable { t, rows })
}

// ---------------------------------------------------------------------------
// Path-space diagnostics
// ---------------------------------------------------------------------------

impl StepPath {
    /// Path without jumps.
    pub fn constant(x0: [f64; 2], horizon: f64) -> Self {
        Self {
            x0,
            events: vec![],
            horizon,
            terminal: x0,
        }
    }

    /// Unit step in the first coordinate at time `s`.
    pub fn unit_step(s: f64, horizon: f64) -> Self {
        let post = [1.0, 0.0];
        Self {
            x0: [0.0; 2],
            events: vec![JumpEvent {
                time: s,
                pre: [0.0; 2],
                post,
            }],
            horizon,
            terminal: post,
        }
    }

    /// Breakpoints `(time, left limit, value)`, starting with `(0, x0, x0)`
    /// and closing with the horizon.
    fn breakpoints(&self) -> Vec<(f64, [f64; 2], [f64; 2])> {
        let mut out = vec![(0.0, self.x0, self.x0)];
        out.extend(self.events.iter().map(|e| (e.time, e.pre, e.post)));
        out.push((self.horizon, self.terminal, self.terminal));
        out
    }

    /// Value at `t`, linear along the drift between records and constant
    /// after the horizon.
    pub fn value(&self, t: f64) -> [f64; 2] {
        self.eval(t, false)
    }

    pub fn left_limit(&self, t: f64) -> [f64; 2] {
        self.eval(t, true)
    }

    fn eval(&self, t: f64, left: bool) -> [f64; 2] {
        let b = self.breakpoints();
        if t >= self.horizon {
            return self.terminal;
        }
        let i = if left {
            b.partition_point(|p| p.0 < t)
        } else {
            b.partition_point(|p| p.0 <= t)
        };
        if i == 0 {
            return self.x0;
        }
        let (t0, _, v0) = b[i - 1];
        let (t1, l1, _) = b[i.min(b.len() - 1)];
        if t1 <= t0 {
            return v0;
        }
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        [v0[0] + w * (l1[0] - v0[0]), v0[1] + w * (l1[1] - v0[1])]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm([a[0] - b[0], a[1] - b[1]])
}

/// Generalized modulus of continuity
/// `γ_k(ω, ρ) = inf max_i osc(ω, [t_{i-1}, t_i))` over partitions
/// `0 = t_0 < … < t_m = k` with mesh `t_i - t_{i-1} ≥ ρ`. Partition points
/// are searched among jump times, which is exact for step paths and for
/// drifts of constant direction.
pub fn gamma_k(path: &StepPath, k: f64, rho: f64) -> Result<f64> {
    ensure!(k > 0.0, Parameter, "k must be positive");
    ensure!(rho > 0.0, Parameter, "rho must be positive");
    ensure!(
        rho < k,
        Parameter,
        "rho must be smaller than k (rho = {rho}, k = {k})"
    );
    let mut pts: Vec<(f64, [f64; 2], [f64; 2])> = vec![(0.0, path.x0, path.x0)];
    pts.extend(
        path.events
            .iter()
            .filter(|e| e.time > 0.0 && e.time < k)
            .map(|e| (e.time, e.pre, e.post)),
    );
    let end = path.left_limit(k);
    pts.push((k, end, end));
    if k > path.horizon {
        // Horizon is a record point of a drift path; keep it in the value set.
        let h = pts.partition_point(|p| p.0 < path.horizon);
        pts.insert(h, (path.horizon, path.terminal, path.terminal));
    }
    let m = pts.len();
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    for i in 0..m - 1 {
        if !best[i].is_finite() {
            continue;
        }
        let mut set = vec![pts[i].2];
        let mut diam: f64 = 0.0;
        for j in i + 1..m {
            let add = pts[j].1;
            diam = set.iter().fold(diam, |d, &s| d.max(dist(s, add)));
            set.push(add);
            if pts[j].0 - pts[i].0 >= rho {
                let v = best[i].max(diam);
                if v < best[j] {
                    best[j] = v;
                }
            }
            let post = pts[j].2;
            diam = set.iter().fold(diam, |d, &s| d.max(dist(s, post)));
            set.push(post);
        }
    }
    Ok(best[m - 1])
}

/// `d_uc(ω₁, ω₂) = Σ_{k≥1} 2^{-k} min(1, sup_{t≤k} |ω₁(t) - ω₂(t)|)`;
/// returns the total and the individual terms.
pub fn d_uc(a: &StepPath, b: &StepPath) -> (f64, Vec<f64>) {
    let mut times: Vec<f64> = a
        .breakpoints()
        .iter()
        .chain(b.breakpoints().iter())
        .map(|p| p.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut terms = vec![];
    let mut total = KahanSum::default();
    let mut sup: f64 = 0.0;
    let mut idx = 0;
    for k in 1..=60 {
        let kf = k as f64;
        while idx < times.len() && times[idx] <= kf {
            let t = times[idx];
            sup = sup
                .max(dist(a.value(t), b.value(t)))
                .max(dist(a.left_limit(t), b.left_limit(t)));
            idx += 1;
        }
        sup = sup
            .max(dist(a.left_limit(kf), b.left_limit(kf)))
            .max(dist(a.value(kf), b.value(kf)));
        let term = 0.5f64.powi(k) * sup.min(1.0);
        terms.push(term);
        total.add(term);
    }
    (total.value(), terms)
}

#[derive(Debug, Clone)]
pub struct PathDiagnostics {
    pub k: f64,
    pub rhos: Vec<f64>,
    /// `gamma[p][r]`.
    pub gamma: Vec<Vec<f64>>,
    pub mean_gamma: Vec<f64>,
    pub max_gamma: Vec<f64>,
    /// `sup_{t≤k} |Π_t|` per path.
    pub sup_bound: Vec<f64>,
    /// `d_uc` between paths `2i` and `2i+1`.
    pub d_uc: Vec<f64>,
}

/// `γ_k` over a list of `ρ`, sup-bounds and pairwise `d_uc` for an
/// ensemble simulated with recorded paths.
pub fn path_diagnostics(ens: &PathEnsemble, k: f64, rhos: &[f64]) -> Result<PathDiagnostics> {
    let paths = ens
        .paths
        .as_ref()
        .ok_or_else(|| Error::Parameter("ensemble has no recorded paths".into()))?;
    for &r in rhos {
        ensure!(
            r < k,
            Parameter,
            "rho must be smaller than k (rho = {r}, k = {k})"
        );
    }
    let gamma: Vec<Vec<f64>> = paths
        .par_iter()
        .map(|p| {
            rhos.iter()
                .map(|&r| gamma_k(p, k, r))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let nr = rhos.len();
    let np = gamma.len().max(1) as f64;
    let mean_gamma = (0..nr)
        .map(|r| gamma.iter().map(|g| g[r]).sum::<f64>() / np)
        .collect();
    let max_gamma = (0..nr)
        .map(|r| gamma.iter().map(|g| g[r]).fold(0.0, f64::max))
        .collect();
    let sup_bound = paths
        .iter()
        .map(|p| {
            p.breakpoints()
                .iter()
                .filter(|b| b.0 <= k)
                .flat_map(|b| [norm(b.1), norm(b.2)])
                .fold(norm(p.left_limit(k)), f64::max)
        })
        .collect();
    let d = paths
        .chunks_exact(2)
        .map(|c| d_uc(&c[0], &c[1]).0)
        .collect();
    Ok(PathDiagnostics {
        k,
        rhos: rhos.to_vec(),
        gamma,
        mean_gamma,
        max_gamma,
        sup_bound,
        d_uc: d,
    })
}

// ---------------------------------------------------------------------------
// Jump-count law
// ---------------------------------------------------------------------------

/// `∫_{|y|>ε} k(y) dy` for an `x`-independent kernel, by quadrature.
pub fn jump_rate(spec: &KernelSpec, epsilon: f64) -> Result<f64> {
    ensure!(
        spec.is_x_independent(),
        Parameter,
        "jump rate is state dependent for this kernel"
    );
    ensure!(epsilon > 0.0, Parameter, "epsilon must be positive");
    let n = spec.n;
    let mut total = 0.0;
    for t in spec.k1_terms().into_iter().chain(spec.k2_terms()) {
        let c = t.weight * t.coefficient.eval([0.0; 2]);
        let f = |r: f64| t.profile.radial(r) * r.powi(n as i32 - 1);
        let v = match t.profile.support_radius() {
            Some(rs) if epsilon < rs => {
                adaptive_real(f, &[epsilon, 1.0f64.max(epsilon), rs], 1e-13, 0.0, 4000).0
            }
            Some(_) => 0.0,
            None => semi_infinite_real(f, epsilon, 1e-13, 0.0).0,
        };
        total += c * sphere_area(n) * v;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct JumpCountReport {
    pub expected_mean: f64,
    pub sample_mean: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Chi-square test of per-path jump counts against `Poisson(T·rate)` at
/// level `level`, with bins merged until each expects at least 5 counts.
pub fn jump_count_test(ens: &PathEnsemble, level: f64) -> Result<JumpCountReport> {
    ensure!(
        ens.excluded == 0,
        Parameter,
        "excluded paths bias the count law"
    );
    let mu = ens.horizon * jump_rate(&ens.spec, ens.scheme.epsilon)?;
    let n = ens.len() as f64;
    let maxc = ens.jumps.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0usize; maxc + 1];
    ens.jumps.iter().for_each(|&j| hist[j as usize] += 1);
    let pmf = |k: usize| -> f64 {
        let lk = k as f64 * mu.ln() - mu - (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        if mu == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            lk.exp()
        }
    };
    // Bins [lo, hi) on counts, the last one open.
    let mut bins: Vec<(f64, usize)> = vec![];
    let (mut e, mut o) = (0.0, 0usize);
    let mut cum = 0.0;
    let upper = ((mu + 10.0 * mu.sqrt() + 10.0) as usize).max(maxc + 1);
    for k in 0..upper {
        let p = pmf(k);
        cum += p;
        e += n * p;
        o += hist.get(k).copied().unwrap_or(0);
        if e >= 5.0 && n * (1.0 - cum) >= 5.0 {
            bins.push((e, o));
            e = 0.0;
            o = 0;
        }
    }
    let rest = n * (1.0 - cum).max(0.0);
    let tail_obs: usize = hist.iter().skip(upper).sum();
    bins.push((e + rest, o + tail_obs));
    let chi2: f64 = bins
        .iter()
        .map(|&(e, o)| {
            if e > 0.0 {
                (o as f64 - e).powi(2) / e
            } else {
                0.0
            }
        })
        .sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let p_value = chi_square_sf(chi2, dof as f64);
    Ok(JumpCountReport {
        expected_mean: mu,
        sample_mean: ens.jumps.iter().map(|&j| j as f64).sum::<f64>() / n,
        chi2,
        dof,
        p_value,
        pass: p_value >= level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::kernel::K1Family;

    fn stable(alpha: f64, skew: f64, c: Coefficient) -> KernelSpec {
        KernelSpec::new(
            1,
            alpha,
            0.0,
            0.5,
            K1Family::StableLike {
                coefficient: c,
                skew,
            },
            crate::kernel::K2Family::None,
        )
        .unwrap()
    }

    #[test]
    fn interpolant_reproduces_smooth_function() {
        let g = TorusGrid::new(1, 1.0, 64).unwrap();
        let f = GridFunction::from_fn(&g, |x| (x[0]).sin() + 0.3 * (3.0 * x[0]).cos());
        let it = Interpolant::new(&f, 16).unwrap();
        for &x in &[0.123, -2.9, 3.1, 7.0] {
            let want = f64::sin(x) + 0.3 * (3.0 * x).cos();
            assert!((it.eval([x, 0.0]) - want).abs() < 1e-7, "{x}");
        }
    }

    #[test]
    fn envelope_dominates_and_rates_match() {
        let spec = KernelSpec::new(
            2,
            1.5,
            0.5,
            0.5,
            K1Family::StableLike {
                coefficient: Coefficient::Constant(1.0),
                skew: 0.3,
            },
            crate::kernel::K2Family::SingularExp {
                weight: 0.5,
                coefficient: Coefficient::Constant(1.0),
            },
        )
        .unwrap();
        let env = Envelope::new(&spec, 0.1).unwrap();
        let (xs, ys) = certification_samples(2, 0.1);
        assert!(env.certify(&spec, &xs, &ys).unwrap() <= 1.0);
        // Proposal rate equals the integral of the envelope.
        let nf = 2.0;
        let stable = 1.3 * 2.0 * PI * (0.1f64.powf(-1.5) - 2f64.powf(-1.5)) / 1.5;
        let power = 0.5 * 2.0 * PI * (0.1f64.powf(-0.5) - 1.0) / 0.5;
        let exp = 0.5 * 2.0 * PI * (-1.0f64).exp() * 2.0;
        assert!(
            (env.rate() - (stable + power + exp)).abs() < 1e-10 * env.rate(),
            "{nf}"
        );
    }

    #[test]
    fn zero_intensity_gives_constant_paths() {
        // No drift for alpha < 1, and a vanishing horizon leaves no jumps.
        let spec = stable(0.5, 0.0, Coefficient::Constant(1.0));
        let scheme = SimScheme::for_spec(&spec, 0.5);
        let ens =
            simulate_paths(&spec, &InitialLaw::Point([0.3, 0.0]), 1e-9, &scheme, 50, 1).unwrap();
        assert!(ens.jumps.iter().all(|&j| j == 0));
        assert!(ens.terminal().iter().all(|x| x[0] == 0.3));
    }

    #[test]
    fn seed_determinism_and_conservation() {
        let spec = stable(
            1.5,
            0.4,
            Coefficient::Lacunary {
                mean: 1.0,
                spread: 0.25,
                tau: 0.5,
                octaves: 5,
                ell: 1.0,
                phase: 0.3,
            },
        );
        let mut scheme = SimScheme::for_spec(&spec, 0.2);
        scheme.max_jumps = 12;
        let a = simulate_paths(&spec, &InitialLaw::Point([0.0; 2]), 0.5, &scheme, 300, 7).unwrap();
        let b = simulate_paths(&spec, &InitialLaw::Point([0.0; 2]), 0.5, &scheme, 300, 7).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.len() + a.excluded, 300);
        assert!(a.excluded > 0);
    }

    #[test]
    fn single_step_gamma() {
        let p = StepPath::unit_step(0.4, 2.0);
        assert_eq!(gamma_k(&p, 1.0, 0.4).unwrap(), 0.0);
        assert_eq!(gamma_k(&p, 1.0, 0.41).unwrap(), 1.0);
        assert!(gamma_k(&p, 1.0, 1.0).is_err());
        assert_eq!(
            gamma_k(&StepPath::constant([1.0, 2.0], 1.0), 3.0, 0.5).unwrap(),
            0.0
        );
    }

    #[test]
    fn d_uc_of_unit_steps() {
        let (d, terms) = d_uc(
            &StepPath::unit_step(0.25, 1.0),
            &StepPath::unit_step(0.75, 1.0),
        );
        assert_eq!(terms[0], 0.5);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_ensembles_have_zero_distance() {
        let spec = stable(0.8, 0.0, Coefficient::Constant(1.0));
        let scheme = SimScheme::for_spec(&spec, 0.1);
        let e = simulate_paths(&spec, &InitialLaw::Point([0.0; 2]), 0.3, &scheme, 200, 3).unwrap();
        let c = one_dim_law_compare(&e, &e, 0.3, LawStatistic::KolmogorovSmirnov, 50, 1).unwrap();
        assert_eq!(c.distance, 0.0);
        let other = stable(0.9, 0.0, Coefficient::Constant(1.0));
        let f = simulate_paths(
            &other,
            &InitialLaw::Point([0.0; 2]),
            0.3,
            &SimScheme::for_spec(&other, 0.1),
            20,
            3,
        )
        .unwrap();
        assert!(matches!(
            one_dim_law_compare(&e, &f, 0.3, LawStatistic::KolmogorovSmirnov, 5, 1),
            Err(Error::Parameter(_))
        ));
    }
}
