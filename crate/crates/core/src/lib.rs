//! KL-regularized risk minimization over probability measures on a parameter space,
//! with the machinery needed to measure how well the minimizer generalizes.
//!
//! The crate is `no_std` (with `alloc`) by default-off of the `std` feature. All
//! floating point transcendentals go through `libm`, so numbers are identical
//! across `std` and `no_std` builds.
//!
//! Layout:
//! - [`measures`]: atomic data measures and grid/particle parameter measures.
//! - [`losses`]: mean-field network loss and expected parametric loss, with linear derivatives.
//! - [`gibbs`]: the regularized objective, its Gibbs minimizer and a mean-field Langevin sampler.
//! - [`funcderiv`]: the kernel operator `C_m`, `δS/δν` and `δm/δν` with a finite-difference oracle.
//! - [`genbench`]: generalization-error estimators, explicit bounds, oracles and rate fits.
//!
//! ```
//! use mfgen_core::genbench::gaussian_mean_oracle;
//! assert_eq!(gaussian_mean_oracle(1.0, 10), 0.2);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]


extern crate alloc;

mod error;
pub mod funcderiv;
pub mod genbench;
pub mod gibbs;
pub mod linalg;
pub mod losses;
pub mod measures;
mod par;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
