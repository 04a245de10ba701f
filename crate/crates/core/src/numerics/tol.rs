//! Centralized numerical tolerances.

/// Symmetry / Hermitian checks and other structural comparisons.
pub const STRUCTURAL: f64 = 1e-10;
/// Relative convergence threshold for iterative eigen-solvers.
pub const ITERATIVE: f64 = 1e-12;
/// Pivot floor relative to the matrix norm in Gaussian elimination.
pub const PIVOT_FLOOR: f64 = 1e-14;
/// Margin on the strict inequality rho < 1.
pub const STABILITY_MARGIN: f64 = 1e-12;
/// Successive log-estimate gap that ends spectral-radius doubling.
pub const RADIUS_LOG_GAP: f64 = 1e-10;
/// Maximum number of squarings in spectral-radius doubling.
pub const RADIUS_MAX_DOUBLINGS: usize = 40;
/// Relative singular-value threshold for numerical rank.
pub const RANK: f64 = 1e-8;
