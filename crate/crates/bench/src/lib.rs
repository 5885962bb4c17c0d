//! Shared fixtures for the benchmarks.

use levyop::{Coefficient, GridFunction, KernelSpec, TorusGrid};

pub fn holder_spec(alpha: f64) -> KernelSpec {
    let c = Coefficient::Lacunary {
        mean: 1.0,
        spread: 0.25,
        tau: 0.5,
        octaves: 5,
        ell: 1.0,
        phase: 0.3,
    };
    KernelSpec::stable_like(1, alpha, 0.5, c).expect("valid fixture")
}

pub fn grid(npts: usize) -> TorusGrid {
    TorusGrid::new(1, 1.0, npts).expect("valid grid")
}

pub fn bump(grid: &TorusGrid, w: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| (-(x[0] * x[0]) / (w * w)).exp())
}
