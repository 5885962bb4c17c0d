//! Bessel functions of order 0 and 1 in the forms needed by the radial
//! symbol integrals, accurate to a few ulps of the leading term.

use std::f64::consts::PI;

const SERIES_MAX: f64 = 2.0;
const ASYMPTOTIC_MIN: f64 = 25.0;

/// `J₀(z) - 1`, without cancellation for small `z`.
pub fn j0_minus_one(z: f64) -> f64 {
    let z = z.abs();
    if z < SERIES_MAX {
        let q = -0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..40 {
            term *= q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        bessel(0, z) - 1.0
    }
}

/// `J₁(z) - z/2`, without cancellation for small `z`.
pub fn j1_minus_linear(z: f64) -> f64 {
    if z < 0.0 {
        return -j1_minus_linear(-z);
    }
    if z < SERIES_MAX {
        let q = -0.25 * z * z;
        let mut term = 0.5 * z;
        let mut sum = 0.0;
        for k in 1..40 {
            term *= q / (k * (k + 1)) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        bessel(1, z) - 0.5 * z
    }
}

pub fn j0(z: f64) -> f64 {
    1.0 + j0_minus_one(z)
}

pub fn j1(z: f64) -> f64 {
    if z < 0.0 {
        -j1(-z)
    } else if z < SERIES_MAX {
        0.5 * z + j1_minus_linear(z)
    } else {
        bessel(1, z)
    }
}

fn bessel(order: u32, z: f64) -> f64 {
    if z >= ASYMPTOTIC_MIN {
        hankel(order, z)
    } else {
        // Trapezoid rule on the periodic integral representation; the error
        // is of the size of J_M(z), negligible once M exceeds z + 30.
        let m = 2 * (z.ceil() as usize + 20);
        let nu = order as f64;
        let s: f64 = (0..m)
            .map(|j| {
                let t = -PI + 2.0 * PI * j as f64 / m as f64;
                (nu * t - z * t.sin()).cos()
            })
            .sum();
        s / m as f64
    }
}

fn hankel(order: u32, z: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a: f64 = 1.0;
    for k in 1..60 {
        let next = a * (mu - ((2 * k - 1) * (2 * k - 1)) as f64) / (k as f64 * 8.0 * z);
        if next.abs() > a.abs() && k > 2 {
            break;
        }
        a = next;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
        if a.abs() < 1e-18 {
            break;
        }
    }
    let chi = z - (0.5 * order as f64 + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(order: u32, z: f64) -> f64 {
        // Composite Simpson on (1/π)∫_0^π cos(nθ - z sin θ) dθ, fine mesh.
        let m = 200_000;
        let h = PI / m as f64;
        let f = |t: f64| (order as f64 * t - z * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn matches_simpson_across_regimes() {
        for &z in &[0.1, 1.0, 1.99, 2.01, 7.5, 24.9, 25.1, 60.0, 180.0] {
            assert!((j0(z) - brute(0, z)).abs() < 1e-12, "J0({z})");
            assert!((j1(z) - brute(1, z)).abs() < 1e-12, "J1({z})");
        }
    }

    #[test]
    fn known_values() {
        assert!((j0(2.404_825_557_695_773)).abs() < 1e-14);
        assert!((j1(3.831_705_970_207_512)).abs() < 1e-14);
    }

    #[test]
    fn small_argument_forms_keep_relative_accuracy() {
        let z: f64 = 1e-4;
        assert!((j0_minus_one(z) / (-z * z / 4.0) - 1.0).abs() < 1e-8);
        assert!((j1_minus_linear(z) / (-z.powi(3) / 16.0) - 1.0).abs() < 1e-8);
    }
}
