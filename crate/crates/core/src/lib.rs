//! Thresholding estimators for sparse covariance matrices, the matrix losses
//! used to score them, Monte Carlo risk estimation, and numerical checks of
//! the least-favorable construction behind the minimax lower bound.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: symmetric matrices, a tridiagonal QL eigensolver, norms and
//!   spectral functions.
//! - [`model`]: sparsity classes and the least-favorable parameter family.
//! - [`sampling`]: seeded Gaussian draws and the sample covariance.
//! - [`estimators`]: hard, soft and adaptive-lasso thresholding with optional
//!   corrections.
//! - [`losses`]: operator, Frobenius and Bregman losses.
//! - [`lower_bound`]: overlap structure, chi-square envelopes and affinity
//!   estimates for the lower-bound construction.
//! - [`risk`]: simulation grids, risk records and rate fitting.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimators;
pub mod losses;
pub mod lower_bound;
pub mod matrix;
pub mod model;
pub mod risk;
pub mod sampling;

pub use error::{Error, ErrorCategory, Result};
pub use matrix::{EigenDecomposition, NormIndex, SquareMatrix, SymmetricMatrix};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
