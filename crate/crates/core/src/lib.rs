//! Numerical core for regularized quasilinear evolution problems of the form
//!
//! ```text
//! ∂t u − αε(|Du|²) Aε,u(D²u) = (|Du|² + ε)^{γ/2} + f(x, t)   in Ω × (0, T)
//! ∂ν u = 0                                                   on ∂Ω × (0, T)
//! ```
//!
//! together with the stationary counterpart `λu − αε A = H`, on axis-aligned
//! boxes. The crate contains the exponent calculator for the maximal
//! regularity estimates, finite-difference operators with a reflection
//! closure for the Neumann condition, an explicit solver, the norm
//! functionals the gradient estimates are stated in, discrete checks of the
//! Bochner-type identity satisfied by `w = |Du|²`, and the experiment
//! harnesses that turn the a priori bounds into checkable properties.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, configuration
//! and the command-line driver live in the `gradlab` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod calculus;
pub mod experiments;
pub mod exponents;
pub mod identities;
pub mod math;
pub mod mesh;
pub mod norms;
pub mod registry;
pub mod solver;

pub use calculus::{DiffusionSpec, HamiltonianSpec, ProblemSpec};
pub use exponents::{ExponentTable, ParamPoint};
pub use mesh::{BoxDomain, Grid, ScalarField, SpaceTimeField};
pub use solver::{SolveConfig, SolveResult};

/// A point in space. Components beyond the domain dimension are ignored and
/// kept at zero.
pub type Point = [f64; 3];
