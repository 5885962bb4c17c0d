//! Experiment configuration (TOML) and fail-fast validation.

use anyhow::{bail, Context, Result};
use levyop::process::{InitialLaw, SimScheme};
use levyop::{Coefficient, K1Family, K2Family, KernelSpec, TorusGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Pipelines executed by `levyop run`.
    pub pipeline: Vec<String>,
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub symbol: SymbolConfig,
    pub resolvent: ResolventConfig,
    pub cauchy: CauchyConfig,
    pub simulate: SimulateConfig,
    pub checks: ChecksConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: vec![],
            kernel: KernelConfig::default(),
            grid: GridConfig::default(),
            symbol: SymbolConfig::default(),
            resolvent: ResolventConfig::default(),
            cauchy: CauchyConfig::default(),
            simulate: SimulateConfig::default(),
            checks: ChecksConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub tau: f64,
    /// `stable_like` or `full_space`.
    pub family: String,
    pub skew: f64,
    /// Scale of the full-space family.
    pub scale: f64,
    pub coefficient: CoefficientConfig,
    pub lower: LowerConfig,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            n: 1,
            alpha: 1.5,
            alpha_prime: 0.0,
            tau: 0.5,
            family: "stable_like".into(),
            skew: 0.0,
            scale: 1.0,
            coefficient: CoefficientConfig::default(),
            lower: LowerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientConfig {
    /// `constant`, `lacunary` or `step`.
    pub kind: String,
    pub value: f64,
    pub mean: f64,
    pub spread: f64,
    pub tau: f64,
    pub octaves: usize,
    pub ell: f64,
    pub phase: f64,
    pub low: f64,
    pub high: f64,
    pub at: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            kind: "lacunary".into(),
            value: 1.0,
            mean: 1.0,
            spread: 0.25,
            tau: 0.5,
            octaves: 5,
            ell: 1.0,
            phase: 0.3,
            low: 1.0,
            high: 2.0,
            at: 0.0,
        }
    }
}

impl CoefficientConfig {
    fn build(&self, field: &str) -> Result<Coefficient> {
        Ok(match self.kind.as_str() {
            "constant" => Coefficient::Constant(self.value),
            "lacunary" => Coefficient::Lacunary {
                mean: self.mean,
                spread: self.spread,
                tau: self.tau,
                octaves: self.octaves,
                ell: self.ell,
                phase: self.phase,
            },
            "step" => Coefficient::Step {
                low: self.low,
                high: self.high,
                at: self.at,
            },
            other => {
                bail!("{field}.kind: unknown coefficient kind `{other}` (constant, lacunary, step)")
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerConfig {
    /// `none`, `exp_tail` or `singular_exp`.
    pub kind: String,
    pub weight: f64,
    pub coefficient: CoefficientConfig,
}

impl Default for LowerConfig {
    fn default() -> Self {
        Self {
            kind: "none".into(),
            weight: 0.5,
            coefficient: CoefficientConfig {
                kind: "constant".into(),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub ell: f64,
    pub npts: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            ell: 1.0,
            npts: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolConfig {
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Write every `csv_stride`-th `x` row of the symbol table.
    pub csv_stride: usize,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            max_panels: levyop::SymbolOptions::default().max_panels,
            csv_stride: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventConfig {
    /// `λ = factor · R` along each ray.
    pub factors: Vec<f64>,
    /// Ray angles in radians.
    pub angles: Vec<f64>,
    /// Adds a ray at `δ' - edge_offset` when set.
    pub edge_offset: Option<f64>,
    /// Defaults to `[0, alpha]`.
    pub alpha_primes: Option<Vec<f64>>,
    pub s: f64,
    pub tol: f64,
    /// Factor of `R` used for the Neumann defect check.
    pub defect_factor: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            factors: (0..=6).map(|k| 2f64.powi(k)).collect(),
            angles: vec![0.0],
            edge_offset: Some(0.1),
            alpha_primes: None,
            s: 0.25,
            tol: 1e-12,
            defect_factor: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CauchyConfig {
    pub horizon: f64,
    pub steps: usize,
    /// Spatial forcing: `bump` or `mode`.
    pub forcing: String,
    /// Time profile: `constant`, `sin`, `ramp`.
    pub time: String,
    pub width: f64,
    pub omega: f64,
    pub t1: f64,
    pub s: f64,
    pub theta: f64,
    /// Only the forcing-driven problem satisfies the zero-initial contract.
    pub zero_start: bool,
    pub csv_stride: usize,
}

impl Default for CauchyConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 256,
            forcing: "bump".into(),
            time: "ramp".into(),
            width: 0.5,
            omega: 1.0,
            t1: 0.25,
            s: 0.25,
            theta: 0.5,
            zero_start: true,
            csv_stride: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub epsilon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub checkpoints: Vec<f64>,
    pub drift_dt: f64,
    pub max_jumps: usize,
    pub x0: Vec<f64>,
    /// Start points for the Monte Carlo / PDE comparison.
    pub probes: Vec<Vec<f64>>,
    /// Width of the Gaussian test function and of `ψ`.
    pub test_width: f64,
    pub record_paths: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            n_paths: 20_000,
            seed: 1,
            horizon: 1.0,
            checkpoints: vec![0.25, 0.5, 1.0],
            drift_dt: 1e-3,
            max_jumps: 1_000_000,
            x0: vec![0.0],
            probes: vec![vec![-1.0], vec![-0.4], vec![0.0], vec![0.5], vec![1.2]],
            test_width: 0.5,
            record_paths: false,
        }
    }
}

/// Declared acceptance thresholds; the exit status reflects them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub max_defect: f64,
    pub max_iterations: usize,
    pub slope_tol: f64,
    pub positivity_tol: f64,
    pub martingale_z: f64,
    pub power_z: f64,
    pub mc_pde_tol: f64,
    /// Bound on the thinning acceptance-count `z`.
    pub acceptance_z: f64,
    /// Level of the Poisson jump-count test.
    pub jump_count_level: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            max_defect: 1e-7,
            max_iterations: 15,
            slope_tol: 0.1,
            positivity_tol: 1e-10,
            martingale_z: 3.0,
            power_z: 5.0,
            mc_pde_tol: 5e-2,
            acceptance_z: 4.0,
            jump_count_level: 1e-3,
        }
    }
}

pub const PIPELINES: [&str; 8] = [
    "validate",
    "symbol",
    "resolvent",
    "cauchy",
    "simulate",
    "verify",
    "crosscheck",
    "bench",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config parse error in {}: {e}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let k1 = match k.family.as_str() {
            "stable_like" => K1Family::StableLike {
                coefficient: k.coefficient.build("kernel.coefficient")?,
                skew: k.skew,
            },
            "full_space" => K1Family::FullSpace { scale: k.scale },
            other => bail!("kernel.family: unknown family `{other}` (stable_like, full_space)"),
        };
        let k2 = match k.lower.kind.as_str() {
            "none" => K2Family::None,
            "exp_tail" => K2Family::ExpTail {
                weight: k.lower.weight,
            },
            "singular_exp" => K2Family::SingularExp {
                weight: k.lower.weight,
                coefficient: k.lower.coefficient.build("kernel.lower.coefficient")?,
            },
            other => {
                bail!("kernel.lower.kind: unknown family `{other}` (none, exp_tail, singular_exp)")
            }
        };
        KernelSpec::new(k.n, k.alpha, k.alpha_prime, k.tau, k1, k2)
            .map_err(|e| anyhow::anyhow!("kernel: {e}"))
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.kernel.n, self.grid.ell, self.grid.npts)
            .map_err(|e| anyhow::anyhow!("grid: {e}"))
    }

    pub fn symbol_options(&self) -> levyop::SymbolOptions {
        levyop::SymbolOptions {
            rel_tol: self.symbol.rel_tol,
            max_panels: self.symbol.max_panels,
        }
    }

    pub fn point(&self, v: &[f64], field: &str) -> Result<[f64; 2]> {
        let n = self.kernel.n;
        if v.len() != n {
            bail!("{field}: expected {n} coordinates, got {}", v.len());
        }
        Ok([v[0], if n == 2 { v[1] } else { 0.0 }])
    }

    pub fn scheme(&self, spec: &KernelSpec) -> SimScheme {
        let mut s = SimScheme::for_spec(spec, self.simulate.epsilon);
        s.drift_dt = self.simulate.drift_dt;
        s.max_jumps = self.simulate.max_jumps;
        s
    }

    pub fn initial(&self) -> Result<InitialLaw> {
        Ok(InitialLaw::Point(
            self.point(&self.simulate.x0, "simulate.x0")?,
        ))
    }

    pub fn alpha_primes(&self, spec: &KernelSpec) -> Vec<f64> {
        self.resolvent
            .alpha_primes
            .clone()
            .unwrap_or_else(|| vec![0.0, spec.alpha])
    }

    pub fn probes(&self) -> Result<Vec<[f64; 2]>> {
        self.simulate
            .probes
            .iter()
            .enumerate()
            .map(|(i, p)| self.point(p, &format!("simulate.probes[{i}]")))
            .collect()
    }

    /// Checks every precondition the named pipelines will rely on, before
    /// any computation.
    pub fn validate(&self, pipelines: &[String]) -> Result<()> {
        for p in pipelines {
            if !PIPELINES.contains(&p.as_str()) {
                bail!(
                    "pipeline: unknown pipeline `{p}` (expected one of {})",
                    PIPELINES.join(", ")
                );
            }
        }
        if pipelines.is_empty() {
            return Ok(());
        }
        let spec = self.kernel()?;
        self.grid()?;
        if self.symbol.rel_tol <= 0.0 {
            bail!("symbol.rel_tol must be positive");
        }
        let uses = |names: &[&str]| pipelines.iter().any(|p| names.contains(&p.as_str()));
        if uses(&[
            "resolvent",
            "cauchy",
            "simulate",
            "verify",
            "crosscheck",
            "bench",
        ]) && !matches!(spec.k1, K1Family::StableLike { .. })
        {
            bail!("kernel.family: this pipeline needs the compactly supported stable_like family");
        }
        if uses(&["resolvent", "crosscheck"]) {
            let r = &self.resolvent;
            if r.factors.len() < 2 || r.factors.iter().any(|f| *f < 1.0) {
                bail!("resolvent.factors: need at least two factors, all >= 1");
            }
            if r.s <= 0.0 {
                bail!("resolvent.s must be positive");
            }
            if self
                .alpha_primes(&spec)
                .iter()
                .any(|a| *a < 0.0 || *a > spec.alpha)
            {
                bail!("resolvent.alpha_primes must lie in [0, alpha]");
            }
            if r.defect_factor < 1.0 {
                bail!("resolvent.defect_factor must be at least 1");
            }
        }
        if uses(&["cauchy", "crosscheck", "bench"]) {
            let c = &self.cauchy;
            if c.horizon <= 0.0 || c.steps == 0 {
                bail!("cauchy: horizon must be positive and steps at least 1");
            }
            if !["bump", "mode"].contains(&c.forcing.as_str()) {
                bail!(
                    "cauchy.forcing: unknown forcing `{}` (bump, mode)",
                    c.forcing
                );
            }
            if !["constant", "sin", "ramp"].contains(&c.time.as_str()) {
                bail!(
                    "cauchy.time: unknown time profile `{}` (constant, sin, ramp)",
                    c.time
                );
            }
            if c.zero_start && c.time == "constant" {
                bail!("cauchy.zero_start requires a forcing that vanishes at t = 0 (use time = \"ramp\" or \"sin\")");
            }
            if c.width <= 0.0 || c.t1 <= 0.0 || c.s <= 0.0 || !(0.0..=1.0).contains(&c.theta) {
                bail!("cauchy: width, t1 and s must be positive and theta in [0, 1]");
            }
        }
        if uses(&["simulate", "verify", "crosscheck"]) {
            let s = &self.simulate;
            self.scheme(&spec)
                .validate()
                .map_err(|e| anyhow::anyhow!("simulate: {e}"))?;
            if s.n_paths == 0 {
                bail!("simulate.n_paths must be at least 1");
            }
            if s.horizon <= 0.0 {
                bail!("simulate.horizon must be positive");
            }
            if s.checkpoints.iter().any(|c| *c <= 0.0 || *c > s.horizon)
                || s.checkpoints.windows(2).any(|w| w[0] >= w[1])
            {
                bail!("simulate.checkpoints must be increasing within (0, horizon]");
            }
            if s.test_width <= 0.0 {
                bail!("simulate.test_width must be positive");
            }
            self.initial()?;
            if uses(&["crosscheck"]) {
                if self.probes()?.is_empty() {
                    bail!("simulate.probes: need at least one probe");
                }
                if s.horizon > self.cauchy.horizon + 1e-12 {
                    bail!("simulate.horizon must not exceed cauchy.horizon for the cross-check");
                }
            }
        }
        Ok(())
    }
}
