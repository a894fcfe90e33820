//! Non-local finite-difference energies with capped quadratic increments:
//! kernels and their moments, grid discretisation, energy evaluation,
//! graduated-non-convexity minimisation, cell-problem density estimates and
//! seeded property suites.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod denoise;
pub mod energy;
pub mod error;
pub mod grid;
pub mod integrands;
pub mod io;
pub mod kernels;
pub mod minimize;
pub mod quadrature;
pub mod rng;
pub mod suites;

pub use cells::{estimate_f_bulk, estimate_f_surf, extrapolate_triplet, CellEstimate, CellKind, CellRow, Sweep};
pub use energy::{energy_total, reference_energies, tail_gap, EnergyBreakdown, PairPlan};
pub use error::{NlgError, Result};
pub use grid::{make_grid, sample_testfn, Field, GridDomain, Mask, TestFunction};
pub use integrands::{CheckReport, IntegrandFamily, Sampler};
pub use kernels::{make_eps_kernel, make_kernel, EpsKernel, KernelSetup, RadialKernel};
pub use minimize::{brute_force_tiny, dirichlet_minimum, minimize_gnc, DirichletSpec, MinResult, Problem, Schedule, Status};
pub use rng::DEFAULT_SEED;
