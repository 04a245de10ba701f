//! Policy optimization over stabilizing feedback controllers of
//! discrete-time LTI systems.
//!
//! The geometry is built on the discrete Lyapunov map: costs, gradients,
//! the Lyapunov Riemannian metric on static gains and the similarity
//! invariant metric on dynamic controllers all reduce to solves of
//! `P = A P Aᵀ + Q`.
//!
//! - [`numerics`]: dense real/complex matrices, generic over [`numerics::Real`]
//! - [`lyapunov`]: the Lyapunov map, its differential and trace identity
//! - [`policy`]: plants, gains, constraint subspaces, stability certificate, scanners
//! - [`lqr`], [`structured`]: static-gain LQR, unconstrained and on linear subspaces
//! - [`lqg`]: dynamic output feedback, similarity orbits and the KM metric
//! - [`hinf`]: frequency-sweep H∞ cost and gradient-sampling descent
//! - [`zeroth`]: model-free gradient estimators and descent

pub mod descent;
pub mod error;
pub mod hinf;
pub mod lqg;
pub mod lqr;
pub mod lyapunov;
pub mod numerics;
pub mod policy;
pub mod structured;
pub mod trace;
pub mod zeroth;

pub use error::{Error, Result};
pub use numerics::Real;

/// Double-precision real matrix, the working type of the policy engines.
pub type Mat = numerics::Matrix<f64>;
/// Double-precision complex matrix.
pub type CMat = numerics::CMatrix<f64>;
/// Single-precision real matrix.
pub type Mat32 = numerics::Matrix<f32>;
