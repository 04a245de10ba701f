use thiserror::Error;

use crate::trace::IterTrace;

/// Errors raised by the numerical substrate and the policy-optimization engines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular matrix in {op}: pivot {pivot:e} below floor {floor:e}")]
    Singular {
        op: &'static str,
        pivot: f64,
        floor: f64,
    },

    #[error("matrix is not Schur stable (spectral radius {rho})")]
    NotSchurStable { rho: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("infeasible policy: {0}")]
    Infeasible(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("descent stalled after {iterations} iterations: {reason}")]
    Stalled {
        iterations: usize,
        reason: String,
        trace: Vec<IterTrace>,
    },

    #[error("Riccati iteration did not converge after {iterations} iterations; (A, B) may not be stabilizable")]
    StabilizabilitySuspect { iterations: usize },

    #[error("Gramian is singular (policy is not minimal): {0}")]
    GramianSingular(String),

    #[error("minimality lost along descent: {0}")]
    MinimalityLost(String),

    #[error("too close to the feasibility boundary: {retries} consecutive infeasible samples")]
    TooCloseToBoundary { retries: usize },

    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            expected: expected.into(),
            got: got.into(),
        }
    }
}
