//! Optimal transport for the Cameron-Martin quadratic cost on `R^d` with the
//! standard Gaussian measure.

pub mod error;
pub mod gaussian;
pub mod harness;
pub mod inequalities;
pub mod maps;
pub mod monge_ampere;
pub mod ot;
pub mod polar;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
