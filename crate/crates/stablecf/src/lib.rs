//! Stable high-order cubature formulas for scattered data.
//!
//! Given arbitrary distinct points in a cube or ball, this crate constructs
//! cubature formulas whose weights are all nonnegative and whose polynomial
//! degree of exactness is as high as the points allow. Two constructions are
//! provided: a weighted least-squares rule with explicit weights through a
//! discrete orthonormal polynomial basis, and an l1-minimal rule computed by
//! a simplex solver, which is typically sparse. Monte Carlo weights and
//! tensor Gauss-Legendre rules serve as baselines, and an experiment harness
//! reproduces point-count-versus-degree fits, accuracy sweeps with exact and
//! noisy data, and sparsity counts.

pub mod cubature;
pub mod domains;
pub mod experiments;
pub mod pointsets;
pub mod polybasis;
pub mod solvers;

pub use cubature::{
    add_noise, construct_l1, construct_ls, kappa, mc_weights, product_gauss_legendre,
    CubatureFormula, Method,
};
pub use domains::{Domain, DomainKind, MomentCache, MultiIndex, WeightFunction};
pub use pointsets::{equidistant_grid, halton, restrict_to_ball, uniform_random, PointSet};
