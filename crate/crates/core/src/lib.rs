//! Cramér-Rao type lower bounds for sparse Bayesian learning, the reference
//! estimators they are compared against, numerical oracles that check every
//! closed form, and a deterministic Monte-Carlo experiment harness.

extern crate blas_src;

pub mod bounds;
pub mod estimators;
pub mod harness;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod rng;

pub use error::{Result, SblError};
