//! Littlewood-Paley pieces of the Schwartz kernel of `a(x, D)`:
//! `k_j(x, z) = (2π)^{-n} ∫ e^{iz·ξ} a(x, ξ) φ_j(ξ) dξ`, evaluated as lattice
//! sums, their partial sums, and the single-shell decay bounds.

use crate::error::{ensure, Error, Result};
use crate::grid::dyadic_bump;
use crate::stats::loglog_slope;
use crate::symbol::SymbolField;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

type C = Complex64;

/// Decay order `N` used by default for the large-`|z|` checks.
pub const DEFAULT_DECAY_ORDER: usize = 4;

#[derive(Debug, Clone)]
pub struct SchwartzOptions {
    /// Largest accepted `|k_{J}(z)| / |S_J(z)|` for the last shell.
    pub cauchy_tol: f64,
    /// Absolute floor for the Cauchy test, relative to the trivial `ℓ¹`
    /// bound of the summed kernel; sums whose limit vanishes need it.
    pub noise_floor: f64,
    /// Last shell to include; defaults to the last one supported strictly
    /// below the Nyquist frequency.
    pub last_shell: Option<usize>,
}

impl Default for SchwartzOptions {
    fn default() -> Self {
        Self {
            cauchy_tol: 1e-2,
            noise_floor: 1e-6,
            last_shell: None,
        }
    }
}

/// Shell kernels of one symbol row along the ray `z e₁`.
#[derive(Debug, Clone)]
pub struct SchwartzKernelTable {
    pub x: [f64; 2],
    pub dim: usize,
    pub order: f64,
    pub ell: f64,
    pub z: Vec<f64>,
    /// First and last shell index.
    pub shell_range: (usize, usize),
    /// `shells[j][i] = k_j(x, z_i)`.
    pub shells: Vec<Vec<C>>,
    /// `Σ_j k_j(x, z_i)`.
    pub kernel: Vec<C>,
    /// Relative size of the last shell at each `z`.
    pub tail: Vec<f64>,
    /// `(2πℓ)^{-n} Σ |a φ_j|` per shell: trivial sup bound of `k_j`.
    pub l1_bounds: Vec<f64>,
    /// Discrete difference sums backing [`SchwartzKernelTable::shell_bound_check`].
    symbol_rows: Vec<Vec<C>>,
    npts: usize,
}

/// Outcome of the single-shell estimate `|k_j(z)| ≤ C |z|^{-M} 2^{j(n+m-M)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellBoundCheck {
    pub shell: usize,
    pub decay: usize,
    /// Exact summation-by-parts inequality held at every sample.
    pub exact_holds: bool,
    /// `max_z |k_j(z)| |z|^M / 2^{j(n+m-M)}`.
    pub constant: f64,
    /// Bound-implied constant `(2πℓ)^{-n} Σ|Δ^M g| ℓ^M / 2^{j(n+m-M)}` with
    /// the `|sin|`-to-`|z|` conversion factor `(π/2)^M` applied.
    pub bound_constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellBoundSummary {
    pub decay: usize,
    pub all_exact: bool,
    pub growth: f64,
    pub checks: Vec<ShellBoundCheck>,
}

/// Result of a log-log fit on a `z` window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub points: usize,
    /// Every value sat below the noise floor, so no slope could be fitted.
    pub negligible: bool,
}

/// Per-shell kernels of row `x_index` of `a`, sampled at `z e₁`.
pub fn schwartz_kernel_sum(
    a: &SymbolField,
    x_index: usize,
    z: &[f64],
    opts: &SchwartzOptions,
) -> Result<SchwartzKernelTable> {
    let grid = a.grid();
    let n = grid.dim();
    ensure!(
        x_index < grid.len(),
        Parameter,
        "x index {x_index} out of range"
    );
    ensure!(!z.is_empty(), Parameter, "no z samples");
    ensure!(
        z.iter().all(|v| v.is_finite() && *v != 0.0),
        Parameter,
        "z samples must be finite and nonzero"
    );
    ensure!(
        a.order > -(n as f64),
        Parameter,
        "symbol order {} must exceed -n = {}",
        a.order,
        -(n as f64)
    );
    let nyq = grid.nyquist();
    ensure!(
        nyq >= 4.0,
        Parameter,
        "grid too coarse for a shell decomposition"
    );
    let natural = (nyq.log2().floor() as usize).saturating_sub(1);
    let last = opts.last_shell.unwrap_or(natural);
    ensure!(
        last <= natural,
        Parameter,
        "shell {last} reaches beyond the Nyquist frequency (last full shell {natural})"
    );

    let row = a.row(x_index);
    let weight = (2.0 * PI * grid.ell()).powi(n as i32).recip();
    let norms: Vec<f64> = (0..grid.len()).map(|k| grid.freq_norm(k)).collect();
    let freqs: Vec<f64> = (0..grid.len()).map(|k| grid.freq(k)[0]).collect();
    // The last shell carries the open-ended bump; with `last < j_max` it is
    // an ordinary bump, which keeps every shell supported below Nyquist.
    let j_max = last + 2;
    let symbol_rows: Vec<Vec<C>> = (0..=last)
        .into_par_iter()
        .map(|j| {
            row.iter()
                .zip(&norms)
                .map(|(v, r)| v * dyadic_bump(j, j_max, *r))
                .collect()
        })
        .collect();
    let shells: Vec<Vec<C>> = symbol_rows
        .par_iter()
        .map(|g| {
            z.iter()
                .map(|&zz| {
                    let s: C = g
                        .iter()
                        .zip(&freqs)
                        .filter(|(v, _)| v.re != 0.0 || v.im != 0.0)
                        .map(|(v, f)| v * C::from_polar(1.0, zz * f))
                        .sum();
                    s * weight
                })
                .collect()
        })
        .collect();
    let l1_bounds: Vec<f64> = symbol_rows
        .iter()
        .map(|g| weight * g.iter().map(|v| v.norm()).sum::<f64>())
        .collect();
    let kernel: Vec<C> = (0..z.len())
        .map(|i| shells.iter().map(|s| s[i]).sum())
        .collect();
    let floor = opts.noise_floor * l1_bounds.iter().sum::<f64>();
    let tail: Vec<f64> = (0..z.len())
        .map(|i| shells[last][i].norm() / (kernel[i].norm() + floor))
        .collect();
    if let Some((i, t)) = tail.iter().enumerate().find(|(_, t)| **t > opts.cauchy_tol) {
        return Err(Error::Convergence(format!(
            "shell sum not Cauchy at z = {:.4e}: last shell carries {t:.3e} of the partial sum",
            z[i]
        )));
    }
    Ok(SchwartzKernelTable {
        x: grid.point(x_index),
        dim: n,
        order: a.order,
        ell: grid.ell(),
        z: z.to_vec(),
        shell_range: (0, last),
        shells,
        kernel,
        tail,
        l1_bounds,
        symbol_rows,
        npts: grid.npts(),
    })
}

impl SchwartzKernelTable {
    fn floor(&self, rel: f64) -> f64 {
        rel * self.l1_bounds.iter().sum::<f64>()
    }

    /// Log-log slope of `|k|` against `|z|` over samples with `lo ≤ |z| ≤ hi`.
    pub fn slope(&self, lo: f64, hi: f64, noise_floor: f64) -> Result<SlopeFit> {
        let floor = self.floor(noise_floor);
        let (mut xs, mut ys) = (vec![], vec![]);
        let mut total = 0;
        for (z, k) in self.z.iter().zip(&self.kernel) {
            let r = z.abs();
            if r < lo || r > hi {
                continue;
            }
            total += 1;
            if k.norm() > floor {
                xs.push(r);
                ys.push(k.norm());
            }
        }
        ensure!(
            total >= 2,
            Parameter,
            "fewer than two samples in [{lo}, {hi}]"
        );
        if xs.len() < 2 {
            return Ok(SlopeFit {
                slope: f64::NEG_INFINITY,
                points: total,
                negligible: true,
            });
        }
        Ok(SlopeFit {
            slope: loglog_slope(&xs, &ys),
            points: xs.len(),
            negligible: false,
        })
    }

    /// Checks the `M`-th order single-shell bound for shell `j`.
    ///
    /// Summation by parts along `ξ₁` gives the exact inequality
    /// `|k_j(z)| (2ℓ|sin(z/2ℓ)|)^M ≤ (2πℓ)^{-n} ℓ^M Σ |Δ₁^M (a φ_j)|`,
    /// which is verified at every sample. The normalised constant of the
    /// continuous form is reported alongside.
    pub fn shell_bound_check(&self, j: usize, decay: usize) -> Result<ShellBoundCheck> {
        ensure!(j <= self.shell_range.1, Parameter, "shell {j} not in table");
        let g = &self.symbol_rows[j];
        let m = self.npts;
        let mut d = g.clone();
        for _ in 0..decay {
            d = (0..d.len())
                .map(|idx| {
                    let (r, c) = if self.dim == 1 {
                        (idx, 0)
                    } else {
                        (idx / m, idx % m)
                    };
                    let next = (r + 1) % m;
                    let nidx = if self.dim == 1 { next } else { next * m + c };
                    d[nidx] - d[idx]
                })
                .collect();
        }
        let weight = (2.0 * PI * self.ell).powi(self.dim as i32).recip();
        let rhs = weight * self.ell.powi(decay as i32) * d.iter().map(|v| v.norm()).sum::<f64>();
        let scale = 2f64.powf(j as f64 * (self.dim as f64 + self.order - decay as f64));
        let mut exact = true;
        let mut constant = 0.0f64;
        for (z, k) in self.z.iter().zip(&self.shells[j]) {
            let s = (2.0 * self.ell * (0.5 * z / self.ell).sin()).abs();
            if k.norm() * s.powi(decay as i32) > rhs * (1.0 + 1e-9) + 1e-300 {
                exact = false;
            }
            constant = constant.max(k.norm() * z.abs().powi(decay as i32) / scale);
        }
        Ok(ShellBoundCheck {
            shell: j,
            decay,
            exact_holds: exact,
            constant,
            bound_constant: rhs * (0.5 * PI).powi(decay as i32) / scale,
        })
    }

    /// Shell-bound checks for every shell at the given decay order.
    pub fn shell_bound_scan(&self, decay: usize) -> Result<Vec<ShellBoundCheck>> {
        (0..=self.shell_range.1)
            .map(|j| self.shell_bound_check(j, decay))
            .collect()
    }

    /// All shells at one decay order: whether every exact inequality held,
    /// and the growth of the bound constants, `max` over the upper half of
    /// the shells divided by `max` over shells `1..J/2`. A bounded family
    /// keeps this ratio `O(1)`; a wrong exponent makes it grow like `2^{J/2}`.
    pub fn shell_bound_summary(&self, decay: usize) -> Result<ShellBoundSummary> {
        let checks = self.shell_bound_scan(decay)?;
        let last = self.shell_range.1;
        ensure!(last >= 4, Parameter, "need at least five shells");
        let half = last / 2;
        let lower = checks[1..half]
            .iter()
            .map(|c| c.bound_constant)
            .fold(0.0, f64::max);
        let upper = checks[half..]
            .iter()
            .map(|c| c.bound_constant)
            .fold(0.0, f64::max);
        Ok(ShellBoundSummary {
            decay,
            all_exact: checks
                .iter()
                .all(|c| c.exact_holds && c.constant <= c.bound_constant * (1.0 + 1e-9)),
            growth: upper / lower,
            checks,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "z,kernel_re,kernel_im,tail")?;
        for j in 0..self.shells.len() {
            write!(w, ",k{j}_abs")?;
        }
        writeln!(w)?;
        for i in 0..self.z.len() {
            write!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.z[i], self.kernel[i].re, self.kernel[i].im, self.tail[i]
            )?;
            for s in &self.shells {
                write!(w, ",{:.17e}", s[i].norm())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `count` log-spaced samples on `[lo, hi]`.
pub fn log_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ramp, TorusGrid};

    fn ones(n: usize, npts: usize) -> SymbolField {
        let g = TorusGrid::new(n, 1.0, npts).unwrap();
        SymbolField::multiplier(&g, 0.0, 1.0, 8, |_| C::new(1.0, 0.0))
    }

    #[test]
    fn unit_symbol_partial_sum_is_the_smoothed_dirichlet_kernel() {
        let a = ones(1, 512);
        let z = log_samples(0.01, 3.0, 25);
        let loose = SchwartzOptions {
            cauchy_tol: f64::INFINITY,
            ..Default::default()
        };
        let t = schwartz_kernel_sum(&a, 0, &z, &loose).unwrap();
        let top = t.shell_range.1 as i32;
        for (i, &zz) in z.iter().enumerate() {
            // ψ_J = Σ_{j≤J} φ_j = ramp(|ξ| / 2^J), summed independently.
            let mut s = 0.0;
            for k in -256i64..256 {
                s += ramp((k as f64).abs() / 2f64.powi(top)) * (zz * k as f64).cos();
            }
            s /= 2.0 * PI;
            assert!(
                (t.kernel[i].re - s).abs() < 1e-10,
                "z {zz}: {} vs {s}",
                t.kernel[i].re
            );
            assert!(t.kernel[i].im.abs() < 1e-10);
        }
        // Away from the origin the sum is Cauchy in the default sense.
        let a = ones(1, 2048);
        let far = schwartz_kernel_sum(
            &a,
            0,
            &log_samples(1.0, 3.0, 8),
            &SchwartzOptions::default(),
        )
        .unwrap();
        let tail = far.slope(1.0, 3.0, 1e-10).unwrap();
        assert!(
            tail.negligible || tail.slope <= -(DEFAULT_DECAY_ORDER as f64),
            "{tail:?}"
        );
    }

    #[test]
    fn rejects_zero_sample_and_low_order() {
        let a = ones(1, 64);
        assert!(matches!(
            schwartz_kernel_sum(&a, 0, &[0.0], &Default::default()),
            Err(Error::Parameter(_))
        ));
        let g = TorusGrid::new(1, 1.0, 64).unwrap();
        let b = SymbolField::multiplier(&g, -1.5, 1.0, 8, |_| C::new(1.0, 0.0));
        assert!(schwartz_kernel_sum(&b, 0, &[0.5], &Default::default()).is_err());
    }

    #[test]
    fn shell_bound_is_exact_for_every_shell() {
        let a = ones(1, 256);
        let z = log_samples(0.005, 3.0, 40);
        let loose = SchwartzOptions {
            cauchy_tol: f64::INFINITY,
            ..Default::default()
        };
        let t = schwartz_kernel_sum(&a, 0, &z, &loose).unwrap();
        for m in [0, 1, 2, 4] {
            for c in t.shell_bound_scan(m).unwrap() {
                assert!(c.exact_holds, "shell {} order {m}", c.shell);
                assert!(c.constant <= c.bound_constant * (1.0 + 1e-9), "{c:?}");
            }
        }
    }

    #[test]
    fn rough_symbol_is_not_cauchy() {
        // `|ξ|^2` cut sharply: every shell is as large as the sum near z = 0.
        let g = TorusGrid::new(1, 1.0, 256).unwrap();
        let a = SymbolField::multiplier(&g, 2.0, 1.0, 8, |v| {
            C::new(v[0] * v[0] * (v[0] * 7.3).cos().signum(), 0.0)
        });
        let r = schwartz_kernel_sum(&a, 0, &[0.02, 0.05], &SchwartzOptions::default());
        assert!(matches!(r, Err(Error::Convergence(_))), "{r:?}");
    }
}
