//! Homogeneous quantum Boltzmann (Uehling–Uhlenbeck) and Fokker–Planck–Landau
//! solvers on a uniform velocity grid, with a weak-coupling limit harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod kernel;
pub mod limit;
pub mod operators;
pub mod potential;
pub mod quad;

pub use error::{Error, Result};
