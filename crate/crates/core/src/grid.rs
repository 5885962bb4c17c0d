//! Periodic torus grids, discrete Fourier transforms, the dyadic
//! Littlewood-Paley partition and Hölder-Zygmund norms.

use crate::error::{ensure, Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Uniform grid on the torus `[-ℓπ, ℓπ)^n` with `npts` points per axis.
///
/// Flat indices are row-major with the first axis slowest. Frequencies are
/// stored in FFT order, so index `k` carries `ξ = k/ℓ` for `k < npts/2` and
/// `(k - npts)/ℓ` otherwise; the Nyquist bin carries `-npts/(2ℓ)`.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    ell: f64,
    npts: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("ell", &self.ell)
            .field("npts", &self.npts)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.npts == o.npts && self.ell == o.ell
    }
}

impl TorusGrid {
    pub fn new(n: usize, ell: f64, npts: usize) -> Result<Self> {
        ensure!(
            n == 1 || n == 2,
            Parameter,
            "dimension must be 1 or 2, got {n}"
        );
        ensure!(
            ell.is_finite() && ell > 0.0,
            Parameter,
            "half period must be positive, got {ell}"
        );
        ensure!(
            npts >= 16 && npts.is_power_of_two(),
            Parameter,
            "points per axis must be a power of two >= 16, got {npts}"
        );
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            ell,
            npts,
            fwd: planner.plan_fft_forward(npts),
            inv: planner.plan_fft_inverse(npts),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn ell(&self) -> f64 {
        self.ell
    }
    pub fn npts(&self) -> usize {
        self.npts
    }
    pub fn len(&self) -> usize {
        self.npts.pow(self.n as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn spacing(&self) -> f64 {
        2.0 * PI * self.ell / self.npts as f64
    }
    pub fn half_width(&self) -> f64 {
        PI * self.ell
    }
    /// Measure of one cell, `h^n`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Per-axis integer indices of a flat index (unused axes are zero).
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx / self.npts, idx % self.npts]
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        if self.n == 1 {
            ij[0]
        } else {
            ij[0] * self.npts + ij[1]
        }
    }

    pub fn coord_1d(&self, j: usize) -> f64 {
        -PI * self.ell + j as f64 * self.spacing()
    }

    /// Physical coordinates of a flat index.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let ij = self.unflatten(idx);
        let x0 = self.coord_1d(ij[0]);
        if self.n == 1 {
            [x0, 0.0]
        } else {
            [x0, self.coord_1d(ij[1])]
        }
    }

    /// Signed integer frequency index of an FFT-order position.
    pub fn signed_index(&self, k: usize) -> i64 {
        let h = (self.npts / 2) as i64;
        let k = k as i64;
        if k < h {
            k
        } else {
            k - self.npts as i64
        }
    }

    pub fn is_nyquist_1d(&self, k: usize) -> bool {
        k == self.npts / 2
    }

    /// Lattice frequency of a flat FFT-order index.
    pub fn freq(&self, idx: usize) -> [f64; 2] {
        let ij = self.unflatten(idx);
        let a = self.signed_index(ij[0]) as f64 / self.ell;
        if self.n == 1 {
            [a, 0.0]
        } else {
            [a, self.signed_index(ij[1]) as f64 / self.ell]
        }
    }

    /// Flat index of the lattice frequency `-ξ`.
    pub fn neg_index(&self, idx: usize) -> usize {
        let ij = self.unflatten(idx);
        let m = self.npts;
        self.flatten([(m - ij[0]) % m, (m - ij[1]) % m])
    }

    pub fn freq_norm(&self, idx: usize) -> f64 {
        let f = self.freq(idx);
        (f[0] * f[0] + f[1] * f[1]).sqrt()
    }

    /// All sign variants of a lattice frequency that alias onto the same bin.
    /// Length 1 away from Nyquist, 2 on one Nyquist axis, 4 on the corner.
    pub fn alias_variants(&self, idx: usize) -> Vec<[f64; 2]> {
        let ij = self.unflatten(idx);
        let f = self.freq(idx);
        let mut out = vec![f];
        for axis in 0..self.n {
            if self.is_nyquist_1d(ij[axis]) {
                let mut extra = out.clone();
                for v in extra.iter_mut() {
                    v[axis] = -v[axis];
                }
                out.extend(extra);
            }
        }
        out
    }

    pub fn max_freq_norm(&self) -> f64 {
        (self.n as f64).sqrt() * (self.npts / 2) as f64 / self.ell
    }

    /// Nyquist frequency per axis.
    pub fn nyquist(&self) -> f64 {
        (self.npts / 2) as f64 / self.ell
    }

    fn axis_fft(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let m = self.npts;
        if self.n == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(m) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..m {
            for r in 0..m {
                col[r] = data[r * m + c];
            }
            plan.process(&mut col);
            for r in 0..m {
                data[r * m + c] = col[r];
            }
        }
    }

    fn sign_flip(&self, data: &mut [Complex64]) {
        for (idx, v) in data.iter_mut().enumerate() {
            let ij = self.unflatten(idx);
            let parity = if self.n == 1 { ij[0] } else { ij[0] + ij[1] };
            if parity % 2 == 1 {
                *v = -*v;
            }
        }
    }

    /// `f̂_k = N^{-n} Σ_j f_j e^{-i x_j·ξ_k}`.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len());
        let mut data = values.to_vec();
        self.axis_fft(&mut data, false);
        self.sign_flip(&mut data);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
        data
    }

    /// `f_j = Σ_k f̂_k e^{i x_j·ξ_k}`.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.len());
        let mut data = coeffs.to_vec();
        self.sign_flip(&mut data);
        self.axis_fft(&mut data, true);
        data
    }

    /// Applies the Fourier multiplier `m` (FFT order) to physical samples.
    pub fn multiply(&self, values: &[Complex64], m: &[Complex64]) -> Vec<Complex64> {
        let mut c = self.forward(values);
        c.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
        self.inverse(&c)
    }

    /// Samples a multiplier `m(ξ)`, averaging over aliased Nyquist variants.
    pub fn sample_multiplier<F: Fn([f64; 2]) -> Complex64>(&self, m: F) -> Vec<Complex64> {
        (0..self.len())
            .map(|idx| {
                let vars = self.alias_variants(idx);
                let s: Complex64 = vars.iter().map(|&v| m(v)).sum();
                s / vars.len() as f64
            })
            .collect()
    }

    /// Periodic distance between two points.
    pub fn torus_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let p = 2.0 * PI * self.ell;
        let mut s = 0.0;
        for axis in 0..self.n {
            let mut d = (a[axis] - b[axis]).rem_euclid(p);
            if d > 0.5 * p {
                d = p - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Wraps a point of `ℝ^n` onto the fundamental cell.
    pub fn wrap(&self, x: [f64; 2]) -> [f64; 2] {
        let p = 2.0 * PI * self.ell;
        let mut out = x;
        for v in out.iter_mut().take(self.n) {
            *v = (*v + PI * self.ell).rem_euclid(p) - PI * self.ell;
        }
        out
    }
}

/// Whether values are point samples or Fourier coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Frequency,
}

/// Complex samples on a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: TorusGrid,
    pub values: Vec<Complex64>,
    pub space: Space,
}

impl GridFunction {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            space: Space::Physical,
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        ensure!(
            values.len() == grid.len(),
            Parameter,
            "expected {} samples, got {}",
            grid.len(),
            values.len()
        );
        Ok(Self {
            grid: grid.clone(),
            values,
            space: Space::Physical,
        })
    }

    /// Samples a real function of the grid coordinates.
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: &TorusGrid, f: F) -> Self {
        let values = (0..grid.len())
            .map(|i| Complex64::new(f(grid.point(i)), 0.0))
            .collect();
        Self {
            grid: grid.clone(),
            values,
            space: Space::Physical,
        }
    }

    pub fn to_frequency(&self) -> Self {
        match self.space {
            Space::Frequency => self.clone(),
            Space::Physical => Self {
                grid: self.grid.clone(),
                values: self.grid.forward(&self.values),
                space: Space::Frequency,
            },
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.space {
            Space::Physical => self.clone(),
            Space::Frequency => Self {
                grid: self.grid.clone(),
                values: self.grid.inverse(&self.values),
                space: Space::Physical,
            },
        }
    }

    pub fn require_physical(&self) -> Result<()> {
        ensure!(
            self.space == Space::Physical,
            Parameter,
            "expected a physical-space function"
        );
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.re))
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn axpy(&self, a: Complex64, other: &Self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    /// Trigonometric interpolation at an arbitrary point.
    pub fn interpolate(&self, x: [f64; 2]) -> Complex64 {
        let c = self.to_frequency();
        let g = &self.grid;
        let mut s = Complex64::new(0.0, 0.0);
        for (idx, v) in c.values.iter().enumerate() {
            let vars = g.alias_variants(idx);
            let w = 1.0 / vars.len() as f64;
            for xi in vars {
                let ph = x[0] * xi[0] + x[1] * xi[1];
                s += v * Complex64::from_polar(w, ph);
            }
        }
        s
    }

    /// Writes `index columns, re, im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = self.to_physical();
        if p.grid.dim() == 1 {
            writeln!(w, "i,x,re,im")?;
        } else {
            writeln!(w, "i,j,x1,x2,re,im")?;
        }
        for (idx, v) in p.values.iter().enumerate() {
            let ij = p.grid.unflatten(idx);
            let x = p.grid.point(idx);
            if p.grid.dim() == 1 {
                writeln!(w, "{},{:.17e},{:.17e},{:.17e}", ij[0], x[0], v.re, v.im)?;
            } else {
                writeln!(
                    w,
                    "{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                    ij[0], ij[1], x[0], x[1], v.re, v.im
                )?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`GridFunction::write_csv`].
    pub fn read_csv<R: BufRead>(grid: &TorusGrid, r: R) -> Result<Self> {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut seen = vec![false; grid.len()];
        let ncoord = grid.dim();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parameter(e.to_string()))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            ensure!(
                cols.len() == 2 * ncoord + 2,
                Parameter,
                "line {}: wrong column count",
                lineno + 1
            );
            let parse_u = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))
            };
            let parse_f = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))
            };
            let mut ij = [0usize; 2];
            for a in 0..ncoord {
                ij[a] = parse_u(cols[a])?;
                ensure!(
                    ij[a] < grid.npts(),
                    Parameter,
                    "line {}: index out of range",
                    lineno + 1
                );
            }
            let idx = grid.flatten(ij);
            values[idx] =
                Complex64::new(parse_f(cols[2 * ncoord])?, parse_f(cols[2 * ncoord + 1])?);
            seen[idx] = true;
        }
        ensure!(
            seen.iter().all(|&s| s),
            Parameter,
            "csv does not cover every grid point"
        );
        Self::from_values(grid, values)
    }
}

/// Polynomial smoothstep `S(t) = t^{k+1} Σ_{i≤k} C(k+i, i)(1-t)^i`, clamped to
/// `[0, 1]`. It is `C^k`, and `S(1-t) = 1 - S(t)`.
pub fn smoothstep(t: f64, k: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut binom = 1.0;
    let mut pow = 1.0;
    for i in 0..=k {
        if i > 0 {
            binom *= (k + i) as f64 / i as f64;
            pow *= 1.0 - t;
        }
        s += binom * pow;
    }
    s * t.powi(k as i32 + 1)
}

/// Smoothness order of the dyadic ramp.
pub const RAMP_ORDER: usize = 6;

/// Radial ramp: 1 on `[0, 1]`, 0 on `[2, ∞)`.
pub fn ramp(r: f64) -> f64 {
    1.0 - smoothstep(r - 1.0, RAMP_ORDER)
}

/// Dyadic partition of unity sampled on a frequency lattice.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    pub grid: TorusGrid,
    pub j_max: usize,
    /// `phis[j][idx]` in FFT order.
    pub phis: Vec<Vec<f64>>,
}

/// Value of the `j`-th bump at radius `r`, with the last shell `j_max`
/// absorbing everything above `2^{j_max - 1}`.
pub fn dyadic_bump(j: usize, j_max: usize, r: f64) -> f64 {
    if j == 0 {
        return ramp(r);
    }
    let lower = ramp(r / 2f64.powi(j as i32 - 1));
    if j == j_max {
        return 1.0 - lower;
    }
    ramp(r / 2f64.powi(j as i32)) - lower
}

pub fn build_dyadic_partition(grid: &TorusGrid) -> DyadicPartition {
    let j_max = grid.max_freq_norm().log2().ceil() as usize + 1;
    let phis = (0..=j_max)
        .map(|j| {
            (0..grid.len())
                .map(|idx| dyadic_bump(j, j_max, grid.freq_norm(idx)))
                .collect()
        })
        .collect();
    DyadicPartition {
        grid: grid.clone(),
        j_max,
        phis,
    }
}

impl DyadicPartition {
    /// `φ_j(D) f` in physical space.
    pub fn filter(&self, f: &GridFunction, j: usize) -> GridFunction {
        let c = f.to_frequency();
        let vals: Vec<Complex64> = c
            .values
            .iter()
            .zip(&self.phis[j])
            .map(|(v, p)| v * p)
            .collect();
        GridFunction {
            grid: f.grid.clone(),
            values: f.grid.inverse(&vals),
            space: Space::Physical,
        }
    }

    /// `max_j 2^{js} ‖φ_j(D) f‖_∞` together with the maximising shell.
    pub fn shell_norms(&self, f: &GridFunction) -> Vec<f64> {
        let c = f.to_frequency();
        (0..=self.j_max)
            .map(|j| {
                let vals: Vec<Complex64> = c
                    .values
                    .iter()
                    .zip(&self.phis[j])
                    .map(|(v, p)| v * p)
                    .collect();
                if vals.iter().all(|v| v.norm() == 0.0) {
                    return 0.0;
                }
                f.grid
                    .inverse(&vals)
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.norm()))
            })
            .collect()
    }
}

/// Discrete Hölder-Zygmund norm `max_k 2^{ks} ‖φ_k(D) f‖_∞`.
pub fn holder_zygmund_norm(f: &GridFunction, s: f64, partition: &DyadicPartition) -> Result<f64> {
    ensure!(
        s > 0.0 && s.is_finite(),
        Parameter,
        "smoothness index must be positive, got {s}"
    );
    f.require_physical()?;
    ensure!(
        f.grid == partition.grid,
        Parameter,
        "partition and function live on different grids"
    );
    Ok(norm_from_shells(&partition.shell_norms(f), s))
}

/// Combines per-shell sup norms into the `C^s` norm.
pub fn norm_from_shells(shells: &[f64], s: f64) -> f64 {
    shells
        .iter()
        .enumerate()
        .fold(0.0, |m, (k, v)| m.max(2f64.powf(k as f64 * s) * v))
}

/// One entry of a [`tail_decay_check`] scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailNorm {
    pub radius: f64,
    pub sup: f64,
    pub quotient: f64,
}

impl TailNorm {
    pub fn total(&self) -> f64 {
        self.sup + self.quotient
    }
}

/// Hölder norm of `f` restricted to the complement of `B_R(0)` for each
/// radius. For `0 < s < 1` the quotient uses first differences; for
/// `1 ≤ s < 2` symmetric second differences along the grid axes.
pub fn tail_decay_check(f: &GridFunction, s: f64, radii: &[f64]) -> Result<Vec<TailNorm>> {
    f.require_physical()?;
    ensure!(
        s > 0.0 && s < 2.0,
        Parameter,
        "smoothness index must lie in (0, 2), got {s}"
    );
    let g = &f.grid;
    for &r in radii {
        ensure!(
            r >= 0.0 && r < g.half_width(),
            Parameter,
            "radius {r} must lie in [0, {})",
            g.half_width()
        );
    }
    let origin = [0.0, 0.0];
    radii
        .iter()
        .map(|&r| {
            let outside: Vec<usize> = (0..g.len())
                .filter(|&i| g.torus_distance(g.point(i), origin) > r)
                .collect();
            let sup = outside
                .iter()
                .fold(0.0f64, |m, &i| m.max(f.values[i].norm()));
            let mut quotient = 0.0f64;
            if s < 1.0 {
                for (a, &i) in outside.iter().enumerate() {
                    for &j in &outside[a + 1..] {
                        let d = g.torus_distance(g.point(i), g.point(j));
                        let q = (f.values[i] - f.values[j]).norm() / d.powf(s);
                        quotient = quotient.max(q);
                    }
                }
            } else {
                let m = g.npts();
                let inside = |i: usize| g.torus_distance(g.point(i), origin) > r;
                for &i in &outside {
                    let ij = g.unflatten(i);
                    for axis in 0..g.dim() {
                        for step in 1..m / 2 {
                            let mut p = ij;
                            let mut q = ij;
                            p[axis] = (ij[axis] + step) % m;
                            q[axis] = (ij[axis] + m - step) % m;
                            let (ip, iq) = (g.flatten(p), g.flatten(q));
                            if !inside(ip) || !inside(iq) {
                                continue;
                            }
                            let h = step as f64 * g.spacing();
                            let d2 = (f.values[ip] - 2.0 * f.values[i] + f.values[iq]).norm();
                            quotient = quotient.max(d2 / h.powf(s));
                        }
                    }
                }
            }
            Ok(TailNorm {
                radius: r,
                sup,
                quotient,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, npts: usize) -> TorusGrid {
        TorusGrid::new(n, 1.0, npts).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(1, 1.0, 8).is_err());
        assert!(TorusGrid::new(1, 1.0, 48).is_err());
        assert!(TorusGrid::new(3, 1.0, 16).is_err());
        assert!(TorusGrid::new(1, -1.0, 16).is_err());
    }

    #[test]
    fn forward_transform_matches_direct_sum() {
        let g = grid(1, 16);
        let f = GridFunction::from_fn(&g, |x| (x[0] * 3.0).sin() + 0.2 * x[0].cos());
        let c = g.forward(&f.values);
        for k in 0..16 {
            let xi = g.freq(k)[0];
            let direct: Complex64 = (0..16)
                .map(|j| f.values[j] * Complex64::from_polar(1.0, -g.point(j)[0] * xi))
                .sum::<Complex64>()
                / 16.0;
            assert!((direct - c[k]).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn mode_lands_on_its_frequency() {
        let g = TorusGrid::new(2, 1.5, 16).unwrap();
        let f = GridFunction::from_fn(&g, |x| (2.0 * x[0] / 1.5 - 3.0 * x[1] / 1.5).cos());
        let c = g.forward(&f.values);
        for (idx, v) in c.iter().enumerate() {
            let xi = g.freq(idx);
            let hit = ((xi[0] * 1.5).abs() - 2.0).abs() < 1e-12
                && ((xi[1] * 1.5).abs() - 3.0).abs() < 1e-12
                && xi[0] * xi[1] < 0.0;
            let expect = if hit { 0.5 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-13, "idx {idx}");
        }
    }

    #[test]
    fn j_max_and_profile_values() {
        let g = grid(1, 256);
        let p = build_dyadic_partition(&g);
        assert_eq!(p.j_max, 8);
        assert_eq!(dyadic_bump(1, 8, 4.0), 0.0);
        assert!((dyadic_bump(1, 8, 3.0) - 0.5).abs() < 1e-15);
        assert!((dyadic_bump(2, 8, 3.0) - 0.5).abs() < 1e-15);
        assert_eq!(dyadic_bump(0, 8, 3.0), 0.0);
    }

    #[test]
    fn smoothstep_symmetry() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!(
                (smoothstep(t, RAMP_ORDER) + smoothstep(1.0 - t, RAMP_ORDER) - 1.0).abs() < 1e-14
            );
        }
    }

    #[test]
    fn zero_norm_and_bad_index() {
        let g = grid(1, 64);
        let p = build_dyadic_partition(&g);
        let z = GridFunction::zeros(&g);
        assert_eq!(holder_zygmund_norm(&z, 0.5, &p).unwrap(), 0.0);
        assert!(holder_zygmund_norm(&z, 0.0, &p).is_err());
        assert!(holder_zygmund_norm(&z, -1.0, &p).is_err());
    }

    #[test]
    fn norm_of_pure_mode() {
        let g = grid(1, 256);
        let p = build_dyadic_partition(&g);
        for j in 1..7 {
            let f = GridFunction::from_fn(&g, |x| (2f64.powi(j) * x[0]).cos());
            let s = 0.7;
            let v = holder_zygmund_norm(&f, s, &p).unwrap();
            let lo = 2f64.powf(j as f64 * s);
            assert!(v >= lo * (1.0 - 1e-12) && v <= 2.0 * lo, "j={j} v={v}");
        }
    }

    #[test]
    fn two_mode_norm_matches_brute_force_filter() {
        let g = grid(1, 128);
        let p = build_dyadic_partition(&g);
        let f = GridFunction::from_fn(&g, |x| x[0].cos() + (8.0 * x[0]).cos());
        let mut best = 0.0f64;
        for j in 0..=p.j_max {
            let mut m = 0.0f64;
            for i in 0..g.len() {
                let x = g.point(i)[0];
                let v = dyadic_bump(j, p.j_max, 1.0) * x.cos()
                    + dyadic_bump(j, p.j_max, 8.0) * (8.0 * x).cos();
                m = m.max(v.abs());
            }
            best = best.max(2f64.powi(j as i32) * m);
        }
        let v = holder_zygmund_norm(&f, 1.0, &p).unwrap();
        assert!((v - best).abs() < 1e-12 * best, "{v} vs {best}");
    }

    #[test]
    fn tail_scan_examples() {
        let g = TorusGrid::new(1, 2.0, 128).unwrap();
        let gauss = GridFunction::from_fn(&g, |x| (-x[0] * x[0]).exp());
        let t = tail_decay_check(&gauss, 0.5, &[2.0, 4.0, 6.0]).unwrap();
        assert!(t[0].total() > t[1].total() && t[1].total() > t[2].total());
        let one = GridFunction::from_fn(&g, |_| 1.0);
        let t = tail_decay_check(&one, 0.5, &[1.0]).unwrap();
        assert!((t[0].sup - 1.0).abs() < 1e-15 && t[0].quotient == 0.0);
        let bump = GridFunction::from_fn(&g, |x| {
            if x[0].abs() < 1.0 {
                (1.0 - x[0] * x[0]).powi(3)
            } else {
                0.0
            }
        });
        let t = tail_decay_check(&bump, 0.5, &[1.5]).unwrap();
        assert_eq!(t[0].total(), 0.0);
        assert!(tail_decay_check(&bump, 0.5, &[7.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(2, 16);
        let f = GridFunction::from_fn(&g, |x| x[0].sin() * x[1].cos());
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(&g, std::io::Cursor::new(buf)).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn interpolation_reproduces_band_limited_function() {
        let g = grid(1, 32);
        let f = GridFunction::from_fn(&g, |x| (3.0 * x[0]).sin() + 0.5 * (x[0] - 0.3).cos());
        for x in [0.123, -2.5, 3.0] {
            let v = f.interpolate([x, 0.0]);
            let exact = (3.0 * x).sin() + 0.5 * (x - 0.3).cos();
            assert!((v.re - exact).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}
