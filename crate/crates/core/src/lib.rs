//! Bayesian model selection for the normal linear factor model.
//!
//! Two routes are covered: choosing the number of factors of an exploratory
//! model with intrinsic Bayes factors built on marginal-likelihood estimates
//! from Gibbs output, and comparing inequality-constrained confirmatory models
//! against an unconstrained reference through encompassing-prior Bayes factors
//! (posterior mass over prior mass of each model's region).
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic per seed.

#![no_std]

extern crate alloc;

pub mod constraints;
pub mod diagnostics;
pub mod encompassing;
pub mod error;
pub mod identification;
pub mod linalg;
pub mod marglik;
pub mod model;
pub mod sampler;
pub mod stats;
pub mod symmetry;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{CellStatus, Dataset, FactorModel, PatternMatrix, TrueModelSpec};
