//! Dense real and complex matrix substrate.
//!
//! Everything here is generic over [`Real`] (`f32` or `f64`). The rest of the
//! crate works in `f64` through the aliases exported at the crate root.

mod cmatrix;
mod linalg;
mod matrix;
mod scalar;
pub mod tol;

pub use cmatrix::{hermitian_lambda_max, hermitian_top_eigenpair, CMatrix};
pub use linalg::{
    cholesky, inverse, rank, singular_values, solve_linear, spectral_norm, spectral_radius, sym_eigenvalues,
    sym_lambda_max, sym_lambda_min,
};
pub use matrix::Matrix;
pub use scalar::Real;
