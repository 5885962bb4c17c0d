//! Jump kernels `k(x, y) = k1(x, y) + k2(x, y)` and numerical checks of the
//! standing assumptions on them.
//!
//! Every built-in kernel is a finite sum of terms `w · c(x) · g(y)` where `c`
//! is a [`Coefficient`] and `g` a [`Profile`]. Operators that only need
//! point values call [`KernelSpec::k1`] / [`KernelSpec::k2`]; the fast paths
//! elsewhere in the crate iterate over [`KernelSpec::k1_terms`].

use crate::error::{ensure, Error, Result};
use crate::grid::smoothstep;
use crate::quadrature::semi_infinite_real;
use std::f64::consts::PI;

const PHASE_STEP: f64 = 2.399_963_229_728_653; // golden angle

/// Smoothness order of the radial cutoff `χ`.
pub const CUTOFF_ORDER: usize = 4;

/// Radial cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, `C^4` in between.
pub fn cutoff(r: f64) -> f64 {
    1.0 - smoothstep(r - 1.0, CUTOFF_ORDER)
}

/// Hölder-continuous coefficient in `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `mean + spread · W(x) / S` with the truncated lacunary series
    /// `W(x) = Σ_{k<octaves} 2^{-kτ} cos(2^k (x₁ + x₂)/ℓ + phase + k·γ)`
    /// and `S = Σ 2^{-kτ}`, so the values stay in `[mean - spread, mean + spread]`.
    /// The truncation is the mollification; integer frequencies keep it
    /// periodic on the torus of half period `ℓ`.
    Lacunary {
        mean: f64,
        spread: f64,
        tau: f64,
        octaves: usize,
        ell: f64,
        phase: f64,
    },
    /// Discontinuous step along `x₁` (used to exercise failing checks).
    Step {
        low: f64,
        high: f64,
        at: f64,
    },
}

impl Coefficient {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Lacunary {
                mean,
                spread,
                tau,
                octaves,
                ell,
                phase,
            } => {
                let t = (x[0] + x[1]) / ell;
                let mut w = 0.0;
                let mut s = 0.0;
                for k in 0..octaves {
                    let amp = 2f64.powf(-(k as f64) * tau);
                    w += amp * (2f64.powi(k as i32) * t + phase + k as f64 * PHASE_STEP).cos();
                    s += amp;
                }
                if s == 0.0 {
                    mean
                } else {
                    mean + spread * w / s
                }
            }
            Coefficient::Step { low, high, at } => {
                if x[0] < at {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Guaranteed lower and upper bounds of the coefficient.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Coefficient::Constant(c) => (c, c),
            Coefficient::Lacunary { mean, spread, .. } => {
                (mean - spread.abs(), mean + spread.abs())
            }
            Coefficient::Step { low, high, .. } => (low.min(high), low.max(high)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }

    /// Upper bound for the `τ`-Hölder seminorm, from
    /// `|cos a - cos b| ≤ 2^{1-τ} |a - b|^τ`. Infinite for the step.
    pub fn holder_seminorm_bound(&self, tau: f64, n: usize) -> f64 {
        match *self {
            Coefficient::Constant(_) => 0.0,
            Coefficient::Lacunary {
                spread,
                tau: t0,
                octaves,
                ell,
                ..
            } => {
                let dir = if n == 2 { 2f64.sqrt() } else { 1.0 };
                let s: f64 = (0..octaves).map(|k| 2f64.powf(-(k as f64) * t0)).sum();
                if s == 0.0 {
                    return 0.0;
                }
                let w: f64 = (0..octaves)
                    .map(|k| {
                        2f64.powf(-(k as f64) * t0) * (2f64.powi(k as i32) * dir / ell).powf(tau)
                    })
                    .sum();
                spread.abs() / s * 2f64.powf(1.0 - tau) * w
            }
            Coefficient::Step { low, high, .. } => {
                if low == high {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Bound for `‖c‖_{C^τ}` = sup + seminorm.
    pub fn holder_norm_bound(&self, tau: f64, n: usize) -> f64 {
        let (lo, hi) = self.bounds();
        lo.abs().max(hi.abs()) + self.holder_seminorm_bound(tau, n)
    }
}

/// The `y`-dependence of a kernel term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `(1 + skew · y₁/|y|) |y|^{-n-α} χ(|y|)` or, without cutoff, the
    /// full-space power law.
    Stable {
        n: usize,
        alpha: f64,
        skew: f64,
        cutoff: bool,
    },
    /// `e^{-|y|} (1 + |y|)^{-n-1}`.
    ExpTail { n: usize },
    /// `|y|^{-n-α'} e^{-|y|}`.
    SingularExp { n: usize, alpha_prime: f64 },
}

impl Profile {
    pub fn eval(&self, y: [f64; 2]) -> f64 {
        let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
        match *self {
            Profile::Stable {
                n,
                alpha,
                skew,
                cutoff: cut,
            } => {
                if cut && r >= 2.0 {
                    return 0.0;
                }
                let c = if cut { cutoff(r) } else { 1.0 };
                (1.0 + skew * y[0] / r) * r.powf(-(n as f64) - alpha) * c
            }
            Profile::ExpTail { n } => (-r).exp() * (1.0 + r).powi(-(n as i32) - 1),
            Profile::SingularExp { n, alpha_prime } => {
                r.powf(-(n as f64) - alpha_prime) * (-r).exp()
            }
        }
    }

    /// Radial factor `R(r)`, so that `eval(y) = (1 + skew · y₁/|y|) R(|y|)`.
    pub fn radial(&self, r: f64) -> f64 {
        match *self {
            Profile::Stable {
                n,
                alpha,
                cutoff: cut,
                ..
            } => {
                if cut && r >= 2.0 {
                    return 0.0;
                }
                let c = if cut { cutoff(r) } else { 1.0 };
                r.powf(-(n as f64) - alpha) * c
            }
            _ => self.eval([r, 0.0]),
        }
    }

    pub fn skew(&self) -> f64 {
        match *self {
            Profile::Stable { skew, .. } => skew,
            _ => 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Profile::Stable { n, .. } | Profile::ExpTail { n } | Profile::SingularExp { n, .. } => {
                n
            }
        }
    }

    /// Radius beyond which the profile vanishes identically, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Profile::Stable { cutoff: true, .. } => Some(2.0),
            _ => None,
        }
    }

    /// Whether `g(-y) = g(y)`.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            Profile::Stable { skew, .. } => skew == 0.0,
            _ => true,
        }
    }

    /// Exponent `s` of the leading singularity `|y|^{-s}` at the origin.
    pub fn singular_exponent(&self) -> f64 {
        match *self {
            Profile::Stable { n, alpha, .. } => n as f64 + alpha,
            Profile::ExpTail { .. } => 0.0,
            Profile::SingularExp { n, alpha_prime } => n as f64 + alpha_prime,
        }
    }

    /// Exact power-law tail `c · r^{-n-α}` beyond the cutoff region, used by
    /// the full-space diagnostic quadrature.
    pub fn power_tail(&self) -> Option<(f64, f64)> {
        match *self {
            Profile::Stable {
                n,
                alpha,
                skew,
                cutoff: false,
            } if skew == 0.0 => Some((1.0, n as f64 + alpha)),
            _ => None,
        }
    }
}

/// One separable term `weight · coefficient(x) · profile(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub coefficient: Coefficient,
    pub profile: Profile,
}

impl Term {
    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.weight * self.coefficient.eval(x) * self.profile.eval(y)
    }
}

/// Principal part families.
#[derive(Debug, Clone, PartialEq)]
pub enum K1Family {
    /// `a(x)(1 + skew·ŷ₁)|y|^{-n-α} χ(|y|)`.
    StableLike { coefficient: Coefficient, skew: f64 },
    /// `scale · |y|^{-n-α}` on all of `ℝ^n`; a diagnostic that violates the
    /// compact-support assumption on purpose.
    FullSpace { scale: f64 },
}

/// Lower-order families.
#[derive(Debug, Clone, PartialEq)]
pub enum K2Family {
    None,
    /// `weight · e^{-|y|}(1 + |y|)^{-n-1}`.
    ExpTail {
        weight: f64,
    },
    /// `weight · b(x)|y|^{-n-α'} e^{-|y|}`.
    SingularExp {
        weight: f64,
        coefficient: Coefficient,
    },
}

/// Complete kernel description.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub tau: f64,
    pub k1: K1Family,
    pub k2: K2Family,
    pub c_lower: f64,
    pub c_upper: f64,
}

impl KernelSpec {
    /// Builds a spec with constants derived from the family bounds.
    pub fn new(
        n: usize,
        alpha: f64,
        alpha_prime: f64,
        tau: f64,
        k1: K1Family,
        k2: K2Family,
    ) -> Result<Self> {
        let mut s = Self {
            n,
            alpha,
            alpha_prime,
            tau,
            k1,
            k2,
            c_lower: 1.0,
            c_upper: 1.0,
        };
        s.check_ranges()?;
        s.c_lower = s.default_c_lower();
        s.c_upper = s.default_c_upper();
        Ok(s)
    }

    /// Stable-like principal part without lower-order term.
    pub fn stable_like(n: usize, alpha: f64, tau: f64, coefficient: Coefficient) -> Result<Self> {
        Self::new(
            n,
            alpha,
            0.0,
            tau,
            K1Family::StableLike {
                coefficient,
                skew: 0.0,
            },
            K2Family::None,
        )
    }

    pub fn with_constants(mut self, c_lower: f64, c_upper: f64) -> Result<Self> {
        ensure!(
            c_lower > 0.0 && c_upper > 0.0,
            Parameter,
            "constants must be positive"
        );
        self.c_lower = c_lower;
        self.c_upper = c_upper;
        Ok(self)
    }

    pub fn check_ranges(&self) -> Result<()> {
        ensure!(
            self.n == 1 || self.n == 2,
            Parameter,
            "n must be 1 or 2, got {}",
            self.n
        );
        ensure!(
            self.alpha > 0.0 && self.alpha < 2.0,
            Parameter,
            "alpha out of (0,2): {}",
            self.alpha
        );
        ensure!(
            self.alpha_prime >= 0.0 && self.alpha_prime < self.alpha,
            Parameter,
            "alpha_prime out of [0, alpha): {}",
            self.alpha_prime
        );
        ensure!(
            self.tau > 0.0 && self.tau < 1.0,
            Parameter,
            "tau out of (0,1): {}",
            self.tau
        );
        if let K1Family::StableLike { coefficient, skew } = &self.k1 {
            ensure!(
                skew.abs() < 1.0,
                Parameter,
                "skew must lie in (-1, 1): {skew}"
            );
            ensure!(
                coefficient.bounds().0 > 0.0,
                Parameter,
                "coefficient must be bounded below by a positive constant"
            );
        }
        if let K1Family::FullSpace { scale } = &self.k1 {
            ensure!(*scale > 0.0, Parameter, "full-space scale must be positive");
        }
        match &self.k2 {
            K2Family::None => {}
            K2Family::ExpTail { weight } => {
                ensure!(*weight >= 0.0, Parameter, "k2 weight must be nonnegative")
            }
            K2Family::SingularExp {
                weight,
                coefficient,
            } => {
                ensure!(*weight >= 0.0, Parameter, "k2 weight must be nonnegative");
                ensure!(
                    coefficient.bounds().0 >= 0.0,
                    Parameter,
                    "k2 coefficient must be nonnegative"
                );
            }
        }
        Ok(())
    }

    /// Derivative budget `N = n + 1`.
    pub fn derivative_budget(&self) -> usize {
        self.n + 1
    }

    pub fn k1_terms(&self) -> Vec<Term> {
        match &self.k1 {
            K1Family::StableLike { coefficient, skew } => vec![Term {
                weight: 1.0,
                coefficient: coefficient.clone(),
                profile: Profile::Stable {
                    n: self.n,
                    alpha: self.alpha,
                    skew: *skew,
                    cutoff: true,
                },
            }],
            K1Family::FullSpace { scale } => vec![Term {
                weight: *scale,
                coefficient: Coefficient::Constant(1.0),
                profile: Profile::Stable {
                    n: self.n,
                    alpha: self.alpha,
                    skew: 0.0,
                    cutoff: false,
                },
            }],
        }
    }

    pub fn k2_terms(&self) -> Vec<Term> {
        match &self.k2 {
            K2Family::None => vec![],
            K2Family::ExpTail { weight } => vec![Term {
                weight: *weight,
                coefficient: Coefficient::Constant(1.0),
                profile: Profile::ExpTail { n: self.n },
            }],
            K2Family::SingularExp {
                weight,
                coefficient,
            } => vec![Term {
                weight: *weight,
                coefficient: coefficient.clone(),
                profile: Profile::SingularExp {
                    n: self.n,
                    alpha_prime: self.alpha_prime,
                },
            }],
        }
    }

    pub fn k1(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.k1_terms().iter().map(|t| t.eval(x, y)).sum()
    }

    pub fn k2(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.k2_terms().iter().map(|t| t.eval(x, y)).sum()
    }

    /// True when neither part depends on `x`.
    pub fn is_x_independent(&self) -> bool {
        self.k1_terms()
            .iter()
            .chain(self.k2_terms().iter())
            .all(|t| t.coefficient.is_constant())
    }

    /// True when `k(x, -y) = k(x, y)`.
    pub fn is_symmetric(&self) -> bool {
        self.k1_terms()
            .iter()
            .chain(self.k2_terms().iter())
            .all(|t| t.profile.is_symmetric())
    }

    pub fn has_lower_order(&self) -> bool {
        !matches!(self.k2, K2Family::None) && self.k2_terms().iter().any(|t| t.weight > 0.0)
    }

    /// Uses the integrand compensator `-iξ·y` (on `|y| ≤ 2`).
    pub fn compensated(&self) -> bool {
        self.alpha >= 1.0
    }

    /// Largest value of every `x`-coefficient weight, used by envelopes.
    pub fn coefficient_sup(terms: &[Term]) -> f64 {
        terms
            .iter()
            .map(|t| t.weight.abs() * t.coefficient.bounds().1.abs())
            .fold(0.0, f64::max)
    }

    fn default_c_lower(&self) -> f64 {
        match &self.k1 {
            K1Family::StableLike { coefficient, skew } => {
                coefficient.bounds().0 * (1.0 - skew.abs())
            }
            K1Family::FullSpace { scale } => *scale,
        }
    }

    /// Safe analytic constant for the derivative and lower-order bounds.
    fn default_c_upper(&self) -> f64 {
        let big_n = self.derivative_budget();
        let s = self.n as f64 + self.alpha;
        let mut c: f64 = 0.0;
        for t in self.k1_terms() {
            let coef = t.weight * t.coefficient.holder_norm_bound(self.tau, self.n);
            let skew = match t.profile {
                Profile::Stable { skew, .. } => skew.abs(),
                _ => 0.0,
            };
            for j in 0..=big_n {
                let mut d = 0.0;
                for i in 0..=j {
                    let chi = if i == 0 {
                        1.0
                    } else {
                        smoothstep_derivative_bound(i) * 2f64.powi(i as i32)
                    };
                    d += binomial(j, i) * rising(s, j - i) * chi;
                }
                let dim = if self.n == 2 {
                    4f64.powi(j as i32)
                } else {
                    1.0
                };
                let sk = 1.0 + skew * double_factorial(2 * j as i64 - 1) * 2f64.powi(j as i32);
                c = c.max(coef * d * dim * sk);
            }
        }
        for t in self.k2_terms() {
            let coef = t.weight * t.coefficient.holder_norm_bound(self.tau, self.n);
            c = c.max(coef);
        }
        c * 1.25
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn rising(s: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (s + i as f64))
}

fn double_factorial(k: i64) -> f64 {
    if k <= 0 {
        1.0
    } else {
        (1..=k).rev().step_by(2).fold(1.0, |a, v| a * v as f64)
    }
}

/// Sampled maximum of `|S^{(i)}|` for the cutoff smoothstep, inflated by 2%.
fn smoothstep_derivative_bound(i: usize) -> f64 {
    let m = 4000;
    let h = 1e-3;
    let mut best: f64 = 0.0;
    for k in 0..=m {
        let t = k as f64 / m as f64;
        let d = central_difference(|u| smoothstep(u, CUTOFF_ORDER), t, h, i);
        best = best.max(d.abs());
    }
    best * 1.02
}

/// Central finite difference of order `order` (0..=3) with step `h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64, order: usize) -> f64 {
    match order {
        0 => f(x),
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => {
            (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
        }
        _ => panic!("difference order {order} not supported"),
    }
}

/// `k1(x, y) + k2(x, y)`; `y = 0` is rejected.
pub fn eval_kernel(spec: &KernelSpec, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
    if r == 0.0 {
        return Err(Error::Domain("kernel is singular at y = 0".into()));
    }
    ensure!(
        r.is_finite() && x.iter().all(|v| v.is_finite()),
        Domain,
        "non-finite argument"
    );
    Ok(spec.k1(x, y) + spec.k2(x, y))
}

/// Outcome of one assumption check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Relative slack of the worst sample (negative when violated).
    pub margin: f64,
    pub worst: Option<([f64; 2], [f64; 2])>,
    pub reduced_confidence: bool,
    pub detail: String,
}

/// Result of [`validate_assumptions`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// `(h, worst quotient)` pairs of the `x`-Hölder zoom scan.
    pub holder_quotients: Vec<(f64, f64)>,
    /// Fitted log-log slopes of `|∂_r^j k1|` for `j = 0..=N`.
    pub growth_exponents: Vec<f64>,
    /// Tail integral of `‖k2(·, y)‖_{C^τ}` over `|y| ≥ 1`.
    pub tail_integral: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Fitted singularity exponent of `k1`.
    pub fn singularity_exponent(&self) -> f64 {
        self.growth_exponents[0]
    }

    /// Key-value text block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "check.{}.passed = {}\ncheck.{}.margin = {:.6e}\ncheck.{}.reduced_confidence = {}\n",
                c.name, c.passed, c.name, c.margin, c.name, c.reduced_confidence
            ));
        }
        for (j, e) in self.growth_exponents.iter().enumerate() {
            s.push_str(&format!("growth_exponent.{j} = {e:.6}\n"));
        }
        s.push_str(&format!("tail_integral = {:.10e}\n", self.tail_integral));
        s
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn norm(y: [f64; 2]) -> f64 {
    (y[0] * y[0] + y[1] * y[1]).sqrt()
}

/// `sup + τ`-quotient of a function over a finite sample set.
fn ctau_on_samples<F: Fn([f64; 2]) -> f64>(f: F, xs: &[[f64; 2]], tau: f64) -> f64 {
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut q = 0.0f64;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let d = dist(xs[i], xs[j]);
            if d > 0.0 {
                q = q.max((vals[i] - vals[j]).abs() / d.powf(tau));
            }
        }
    }
    sup + q
}

/// Mixed partial `∂^β` in `y` by tensor-product central differences.
fn partial_y<F: Fn([f64; 2]) -> f64>(f: &F, y: [f64; 2], beta: [usize; 2], h: f64) -> f64 {
    let g = |a: f64| central_difference(|b| f([a, b]), y[1], h, beta[1]);
    central_difference(g, y[0], h, beta[0])
}

fn multi_indices(n: usize, max_order: usize) -> Vec<[usize; 2]> {
    let mut out = vec![];
    for a in 0..=max_order {
        for b in 0..=max_order {
            if a + b <= max_order && (n == 2 || b == 0) {
                out.push([a, b]);
            }
        }
    }
    out
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    crate::stats::ols_slope(xs, ys).0
}

/// Numerical check of the seven standing assumptions on the sample sets.
pub fn validate_assumptions(
    spec: &KernelSpec,
    x_samples: &[[f64; 2]],
    y_samples: &[[f64; 2]],
) -> Result<ValidationReport> {
    ensure!(
        !x_samples.is_empty() && !y_samples.is_empty(),
        Precondition,
        "sample sets must be nonempty"
    );
    ensure!(
        y_samples.iter().all(|&y| norm(y) > 0.0),
        Precondition,
        "y samples must avoid the origin"
    );
    spec.check_ranges()?;
    let n = spec.n;
    let s = n as f64 + spec.alpha;
    let tau = spec.tau;
    let big_n = spec.derivative_budget();
    let mut checks = vec![];

    // Support of k1.
    {
        let mut worst: Option<([f64; 2], [f64; 2])> = None;
        let mut max_val = 0.0f64;
        let mut probes: Vec<[f64; 2]> = y_samples
            .iter()
            .copied()
            .filter(|&y| norm(y) >= 2.0)
            .collect();
        for &y in y_samples.iter().take(8) {
            let r = norm(y);
            for scale in [2.0, 2.5, 4.0] {
                probes.push([y[0] / r * scale, y[1] / r * scale]);
            }
        }
        for &x in x_samples {
            for &y in &probes {
                let v = spec.k1(x, y).abs();
                if v > max_val {
                    max_val = v;
                    worst = Some((x, y));
                }
            }
        }
        checks.push(CheckResult {
            name: "support",
            passed: max_val == 0.0,
            margin: -max_val,
            worst,
            reduced_confidence: false,
            detail: format!("max |k1| beyond |y| = 2: {max_val:.3e}"),
        });
    }

    // Lower bound and positivity.
    {
        let mut min_ratio = f64::INFINITY;
        let mut worst = None;
        let mut negative = false;
        for &x in x_samples {
            for &y in y_samples {
                let r = norm(y);
                let k1 = spec.k1(x, y);
                let k2 = spec.k2(x, y);
                if k1 < 0.0 || k2 < 0.0 || ((k1 > 0.0 || k2 > 0.0) && k1 + k2 <= 0.0) {
                    negative = true;
                    worst = Some((x, y));
                }
                if r <= 1.0 {
                    let ratio = k1 * r.powf(s);
                    if ratio < min_ratio {
                        min_ratio = ratio;
                        if !negative {
                            worst = Some((x, y));
                        }
                    }
                }
            }
        }
        let passed =
            !negative && (min_ratio.is_infinite() || min_ratio >= spec.c_lower * (1.0 - 1e-12));
        checks.push(CheckResult {
            name: "lower_bound",
            passed,
            margin: if min_ratio.is_finite() {
                min_ratio / spec.c_lower - 1.0
            } else {
                0.0
            },
            worst,
            reduced_confidence: false,
            detail: format!(
                "min k1|y|^(n+a) = {min_ratio:.6e} vs c_lower = {:.6e}",
                spec.c_lower
            ),
        });
    }

    // Derivative bounds, C^tau in x of each y-derivative.
    let mut growth_exponents = vec![];
    {
        let mut worst_ratio = 0.0f64;
        let mut worst = None;
        let mut reduced = false;
        let eta = 0.01;
        for &y in y_samples.iter().filter(|&&y| norm(y) <= 2.0) {
            let r = norm(y);
            let mut h = eta * r;
            if h < 1e-12 {
                h = 0.25 * r;
                reduced = true;
            }
            for beta in multi_indices(n, big_n) {
                let order = beta[0] + beta[1];
                let norm_val = ctau_on_samples(
                    |x| partial_y(&|yy: [f64; 2]| spec.k1(x, yy), y, beta, h),
                    x_samples,
                    tau,
                );
                let bound = spec.c_upper * r.powf(-s - order as f64);
                let ratio = norm_val / bound;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst = Some((x_samples[0], y));
                }
            }
        }
        // Log-log fits along the first axis at the first x sample.
        let x0 = x_samples[0];
        let radii: Vec<f64> = (0..25)
            .map(|i| 1e-3 * (500f64).powf(i as f64 / 24.0))
            .collect();
        for j in 0..=big_n {
            let logs: Vec<(f64, f64)> = radii
                .iter()
                .filter_map(|&r| {
                    let d = central_difference(|t| spec.k1(x0, [t, 0.0]), r, eta * r, j).abs();
                    (d > 0.0).then(|| (r.ln(), d.ln()))
                })
                .collect();
            let (lx, ly): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
            growth_exponents.push(if lx.len() >= 2 {
                least_squares_slope(&lx, &ly)
            } else {
                f64::NAN
            });
        }
        checks.push(CheckResult {
            name: "derivative_bound",
            passed: worst_ratio <= 1.0,
            margin: 1.0 - worst_ratio,
            worst,
            reduced_confidence: reduced,
            detail: format!("worst |d^b k1|_(C^tau) / (C|y|^(-n-a-|b|)) = {worst_ratio:.4}"),
        });
    }

    // Fine-scale Hölder quotient in x (zoom search).
    let mut holder_quotients = vec![];
    {
        let mut worst_q = 0.0f64;
        let mut worst = None;
        let mut min_slope = f64::INFINITY;
        let lines = holder_scan_lines(x_samples, n);
        for &y in y_samples.iter().filter(|&&y| norm(y) <= 2.0).take(6) {
            let r = norm(y);
            let scale = r.powf(-s);
            for (origin, axis, width) in &lines {
                let f = |t: f64| {
                    let mut x = *origin;
                    x[*axis] += t;
                    spec.k1(x, y)
                };
                let scan = zoom_quotient(&f, -width, *width, tau);
                let fine: Vec<(f64, f64)> = scan
                    .iter()
                    .filter(|p| p.0 <= 1e-4 && p.1 > 0.0)
                    .map(|p| (p.0.ln(), p.1.ln()))
                    .collect();
                if fine.len() >= 4 {
                    let (lx, ly): (Vec<f64>, Vec<f64>) = fine.into_iter().unzip();
                    min_slope = min_slope.min(least_squares_slope(&lx, &ly));
                }
                for (k, &(h, q, t)) in scan.iter().enumerate() {
                    let qn = q / scale;
                    if holder_quotients.len() <= k {
                        holder_quotients.push((h, qn));
                    } else if qn > holder_quotients[k].1 {
                        holder_quotients[k].1 = qn;
                    }
                    if qn > worst_q {
                        worst_q = qn;
                        let mut x = *origin;
                        x[*axis] += t;
                        worst = Some((x, y));
                    }
                }
            }
        }
        checks.push(CheckResult {
            name: "holder_in_x",
            // A quotient that keeps growing as h -> 0 (slope near -tau) marks a jump.
            passed: worst_q <= spec.c_upper && min_slope > -0.5 * tau,
            margin: 1.0 - worst_q / spec.c_upper,
            worst,
            reduced_confidence: false,
            detail: format!(
                "worst normalised quotient {worst_q:.4e} vs C = {:.4e}; fine-scale log slope {min_slope:.3}",
                spec.c_upper
            ),
        });
    }

    // k2 near the origin.
    {
        let mut worst_ratio = 0.0f64;
        let mut worst = None;
        for &y in y_samples.iter().filter(|&&y| norm(y) <= 1.0) {
            let v = ctau_on_samples(|x| spec.k2(x, y), x_samples, tau);
            let ratio = v / (spec.c_upper * norm(y).powf(-(n as f64) - spec.alpha_prime));
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst = Some((x_samples[0], y));
            }
        }
        checks.push(CheckResult {
            name: "lower_order_bound",
            passed: worst_ratio <= 1.0,
            margin: 1.0 - worst_ratio,
            worst,
            reduced_confidence: false,
            detail: format!("worst |k2|_(C^tau) |y|^(n+a') / C = {worst_ratio:.4}"),
        });
    }

    // Integrable tail of k2.
    let dirs = directions(n, 8);
    let k2_norm_at = |r: f64| -> f64 {
        let avg: f64 = dirs
            .iter()
            .map(|d| ctau_on_samples(|x| spec.k2(x, [d[0] * r, d[1] * r]), x_samples, tau))
            .sum::<f64>()
            / dirs.len() as f64;
        avg * sphere_area(n) * r.powi(n as i32 - 1)
    };
    let tail_integral;
    {
        let (v, err, ok) = semi_infinite_real(&k2_norm_at, 1.0, 1e-8, 1e-14);
        tail_integral = v;
        checks.push(CheckResult {
            name: "tail_integral",
            passed: ok && v.is_finite(),
            margin: if ok { 1.0 } else { -1.0 },
            worst: None,
            reduced_confidence: !ok,
            detail: format!("integral = {v:.10e} (error estimate {err:.2e})"),
        });
    }

    // Vanishing at infinity.
    {
        let radii = [1.0, 10.0, 100.0, 1000.0];
        let vals: Vec<f64> = radii
            .iter()
            .map(|&r| {
                dirs.iter()
                    .map(|d| ctau_on_samples(|x| spec.k2(x, [d[0] * r, d[1] * r]), x_samples, tau))
                    .fold(0.0, f64::max)
            })
            .collect();
        let monotone = vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let last = *vals.last().unwrap();
        let small = last <= 1e-6 * vals[0].max(f64::MIN_POSITIVE) || last == 0.0;
        checks.push(CheckResult {
            name: "vanishing_at_infinity",
            passed: monotone && small,
            margin: if vals[0] > 0.0 {
                1.0 - last / vals[0]
            } else {
                1.0
            },
            worst: None,
            reduced_confidence: false,
            detail: format!("norms at |y| = 1,10,100,1000: {vals:?}"),
        });
    }

    Ok(ValidationReport {
        checks,
        holder_quotients,
        growth_exponents,
        tail_integral,
    })
}

/// Unit directions covering the half sphere (`n = 2`) or `±1` (`n = 1`).
fn directions(n: usize, m: usize) -> Vec<[f64; 2]> {
    if n == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..m)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                [t.cos(), t.sin()]
            })
            .collect()
    }
}

fn sphere_area(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

fn holder_scan_lines(xs: &[[f64; 2]], n: usize) -> Vec<([f64; 2], usize, f64)> {
    let mut out = vec![];
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
            (l.min(x[0]), h.max(x[0]))
        });
    let centre = 0.5 * (lo + hi);
    let width = (0.5 * (hi - lo)).max(0.5);
    if n == 1 {
        out.push(([centre, 0.0], 0, width));
    } else {
        for x in xs.iter().take(3) {
            out.push(([centre, x[1]], 0, width));
            out.push(([x[0], centre], 1, width));
        }
    }
    out
}

/// Multiscale search for `max |f(t + h) - f(t)| / h^τ` on `[a, b]`.
///
/// Level 0 scans a uniform grid; each finer level halves `h` and rescans
/// only around the cells with the largest increments, so isolated
/// discontinuities are tracked down to `h ≈ 1e-10`. Returns `(h, q, t)` per
/// level.
pub fn zoom_quotient<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tau: f64) -> Vec<(f64, f64, f64)> {
    let m0 = 2048;
    let keep = 8;
    let mut h = (b - a) / m0 as f64;
    let mut cand: Vec<(f64, f64)> = (0..m0)
        .map(|i| {
            let t = a + i as f64 * h;
            (t, (f(t + h) - f(t)).abs())
        })
        .collect();
    let mut out = vec![];
    loop {
        cand.sort_by(|p, q| q.1.total_cmp(&p.1));
        cand.truncate(keep);
        let (t, d) = cand[0];
        out.push((h, d / h.powf(tau), t));
        if h < 1e-10 {
            break;
        }
        let hn = 0.5 * h;
        let mut next = vec![];
        for &(t, _) in &cand {
            for m in 0..2 {
                let u = t + m as f64 * hn;
                next.push((u, (f(u + hn) - f(u)).abs()));
            }
        }
        cand = next;
        h = hn;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lac(mean: f64, spread: f64) -> Coefficient {
        Coefficient::Lacunary {
            mean,
            spread,
            tau: 0.5,
            octaves: 5,
            ell: 1.0,
            phase: 0.3,
        }
    }

    fn samples_x(n: usize) -> Vec<[f64; 2]> {
        (0..12)
            .map(|i| {
                let t = -3.0 + 0.5 * i as f64 + 0.013;
                if n == 1 {
                    [t, 0.0]
                } else {
                    [t, 0.7 - 0.3 * t]
                }
            })
            .collect()
    }

    fn samples_y(n: usize) -> Vec<[f64; 2]> {
        let mut v = vec![];
        for i in 0..30 {
            let r = 1e-3 * (3000f64).powf(i as f64 / 29.0);
            v.push([r, 0.0]);
            v.push([-r, 0.0]);
            if n == 2 {
                v.push([0.6 * r, -0.8 * r]);
            }
        }
        v
    }

    #[test]
    fn closed_form_values() {
        let spec = KernelSpec::stable_like(1, 1.0, 0.5, Coefficient::Constant(1.0)).unwrap();
        assert_eq!(eval_kernel(&spec, [0.0, 0.0], [0.5, 0.0]).unwrap(), 4.0);
        assert_eq!(eval_kernel(&spec, [0.0, 0.0], [3.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            eval_kernel(&spec, [0.0, 0.0], [0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sine_coefficient_matches_reevaluation() {
        let coefficient = Coefficient::Lacunary {
            mean: 1.0,
            spread: 0.5,
            tau: 0.5,
            octaves: 1,
            ell: 1.0,
            phase: -PI / 2.0,
        };
        let spec = KernelSpec::stable_like(1, 1.0, 0.5, coefficient).unwrap();
        let v = eval_kernel(&spec, [PI / 2.0, 0.0], [0.5, 0.0]).unwrap();
        let exact = (1.0 + 0.5 * (PI / 2.0).sin()) * 0.5f64.powi(-2);
        assert!((v - exact).abs() < 1e-14 * exact);
    }

    #[test]
    fn range_errors() {
        assert!(KernelSpec::stable_like(1, 2.5, 0.5, Coefficient::Constant(1.0)).is_err());
        assert!(KernelSpec::stable_like(1, 1.0, 1.0, Coefficient::Constant(1.0)).is_err());
        assert!(KernelSpec::stable_like(3, 1.0, 0.5, Coefficient::Constant(1.0)).is_err());
        assert!(KernelSpec::stable_like(1, 1.0, 0.5, Coefficient::Constant(-1.0)).is_err());
    }

    #[test]
    fn stable_family_passes_and_fits_exponent() {
        let spec = KernelSpec::stable_like(1, 1.5, 0.5, Coefficient::Constant(1.0)).unwrap();
        let rep = validate_assumptions(&spec, &samples_x(1), &samples_y(1)).unwrap();
        for c in &rep.checks {
            assert!(c.passed, "{} failed: {}", c.name, c.detail);
        }
        assert_eq!(rep.checks.len(), 7);
        assert!((rep.singularity_exponent() + 2.5).abs() < 0.05);
        for (j, e) in rep.growth_exponents.iter().enumerate() {
            assert!((e + 2.5 + j as f64).abs() < 0.05, "order {j}: {e}");
        }
    }

    #[test]
    fn holder_family_with_tail_passes_in_both_dimensions() {
        for n in [1, 2] {
            let spec = KernelSpec::new(
                n,
                1.2,
                0.4,
                0.5,
                K1Family::StableLike {
                    coefficient: lac(1.0, 0.3),
                    skew: if n == 1 { 0.2 } else { 0.0 },
                },
                K2Family::SingularExp {
                    weight: 0.5,
                    coefficient: lac(1.0, 0.2),
                },
            )
            .unwrap();
            let rep = validate_assumptions(&spec, &samples_x(n), &samples_y(n)).unwrap();
            for c in &rep.checks {
                assert!(c.passed, "n={n}: {} failed: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn step_coefficient_fails_holder_check() {
        for tau in [0.05, 0.3, 0.9] {
            let spec = KernelSpec::stable_like(
                1,
                1.5,
                tau,
                Coefficient::Step {
                    low: 1.0,
                    high: 1.5,
                    at: 0.1234,
                },
            )
            .unwrap();
            let rep = validate_assumptions(&spec, &samples_x(1), &samples_y(1)).unwrap();
            assert!(!rep.check("holder_in_x").unwrap().passed, "tau {tau}");
        }
    }

    #[test]
    fn exponential_tail_integral_matches_quadrature() {
        let spec = KernelSpec::new(
            1,
            1.0,
            0.0,
            0.5,
            K1Family::StableLike {
                coefficient: Coefficient::Constant(1.0),
                skew: 0.0,
            },
            K2Family::ExpTail { weight: 1.0 },
        )
        .unwrap();
        let rep = validate_assumptions(&spec, &samples_x(1), &samples_y(1)).unwrap();
        assert!(rep.check("tail_integral").unwrap().passed);
        // 2 ∫_1^∞ e^{-r}(1+r)^{-2} dr by an independent composite Simpson rule.
        let m = 200_000;
        let (a, b) = (1.0f64, 60.0f64);
        let h = (b - a) / m as f64;
        let g = |r: f64| (-r).exp() / (1.0 + r).powi(2);
        let mut s = g(a) + g(b);
        for i in 1..m {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 2.0 * s * h / 3.0;
        assert!(
            (rep.tail_integral - oracle).abs() < 1e-9,
            "{} vs {}",
            rep.tail_integral,
            oracle
        );
    }

    #[test]
    fn full_space_fails_support() {
        let spec = KernelSpec::new(
            1,
            1.0,
            0.0,
            0.5,
            K1Family::FullSpace { scale: 1.0 },
            K2Family::None,
        )
        .unwrap();
        let rep = validate_assumptions(&spec, &samples_x(1), &samples_y(1)).unwrap();
        assert!(!rep.check("support").unwrap().passed);
    }

    #[test]
    fn zoom_tracks_jump() {
        let f = |t: f64| if t < 0.3 { 0.0 } else { 1.0 };
        let scan = zoom_quotient(&f, -1.0, 1.0, 0.5);
        let last = scan.last().unwrap();
        assert!(last.0 < 1e-10 && (last.1 - last.0.powf(-0.5)).abs() < 1e-6 * last.1);
    }
}
