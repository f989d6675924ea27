//! Numerical toolkit for sandwiched resolvents `T_z = F(H − z)⁻¹F*` of
//! self-adjoint operators given in their spectral representation.
//!
//! * [`spectral_model`]: catalog densities, weights and measures, Hölder fits.
//! * [`cauchy_transform`]: the weighted Cauchy transform off the axis, its
//!   principal value and boundary value on the axis, near/far splitting.
//! * [`matrix_oracle`]: finite diagonal models, the matrix `T_z`, norms,
//!   eigenprojection terms and the regularized resolvent.
//! * [`limit_analysis`]: `y ↓ 0` probes, rate fits, the compactness witness
//!   and density recovery from `Im T`.
//! * [`cli`]: config-driven batch commands behind the `lap` binary.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cauchy_transform;
pub mod cli;
pub mod error;
pub mod fit;
pub mod limit_analysis;
pub mod matrix_oracle;
pub mod quadrature;
pub mod spectral_model;

pub use error::{Error, Result};
