//! Numerical realisation of Lévy-type operators
//! `Lu(x) = ∫ (u(x+y) - u(x) - 1_{B_2}(y) y·∇u(x)) k(x, y) dy`
//! with kernels that are only Hölder continuous in `x`.

pub mod cauchy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod process;
pub mod psdo;
pub mod quadrature;
pub mod resolvent;
pub mod schwartz;
pub mod special;
pub mod stats;
pub mod symbol;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use grid::{
    build_dyadic_partition, holder_zygmund_norm, tail_decay_check, DyadicPartition, GridFunction,
    Space, TorusGrid,
};
pub use kernel::{
    eval_kernel, validate_assumptions, Coefficient, K1Family, K2Family, KernelSpec,
    ValidationReport,
};
pub use num_complex::Complex64;
pub use process::{
    d_uc, gamma_k, jump_count_test, martingale_experiment, martingale_residual, mc_vs_pde,
    one_dim_law_compare, path_diagnostics, pde_bias, simulate_paths, simulate_paths_with,
    InitialLaw, LawStatistic, MartingaleReport, PathEnsemble, SimRequest, SimScheme, StepPath,
    TestFunction,
};
pub use psdo::{
    apply_L_direct, apply_xform, apply_yform, remainder_operator_apply, DirectMode, DirectOperator,
    DirectOptions,
};
pub use schwartz::{schwartz_kernel_sum, SchwartzKernelTable, SchwartzOptions, ShellBoundSummary};
pub use symbol::{
    compute_symbol, compute_symbol_with, resolvent_symbol, sector_and_ellipticity,
    symbol_class_norm, SectorReport, SymbolField, SymbolOptions,
};
