//! Numerical homogenization of an elliptic problem with oscillating
//! coefficients and two-phase nonlinear Robin conditions on the holes of a
//! periodically perforated square.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: perforated unit cell, conforming triangulations, tiling.
//! - [`fem`]: P1 assembly, constraints, Jacobi-preconditioned CG, norms.
//! - [`cell`]: periodic cell problems and the homogenized tensor.
//! - [`fine_solver`]: Newton solver for the ε-level problem and its energies.
//! - [`hom_solver`]: Newton solver for the homogenized limit problem.
//! - [`corrector`]: first-order corrector, error measures and rate fits.
//! - [`cli`]: run configuration, caching, orchestration and report output.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod cli;
pub mod corrector;
pub mod error;
pub mod fem;
pub mod fine_solver;
pub mod geometry;
pub mod hom_solver;

pub use error::{Error, Result};
