//! Step rules, stopping rules and the backtracking line search shared by the
//! descent drivers.

use serde::{Deserialize, Serialize};

use crate::trace::IterTrace;

/// Maximum number of step halvings before a driver reports a stall.
pub const MAX_BACKTRACKS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step; `None` selects the driver's documented default.
    Fixed {
        #[serde(default)]
        eta: Option<f64>,
    },
    /// `min(cap, s_K(V))` from the stability certificate (static gains only;
    /// dynamic drivers treat `cap` as the initial step).
    Certificate { cap: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Certificate { cap: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { tol: 1e-8, max_iter: 10_000 }
    }
}

/// Result of a descent driver: the log plus the final iterate.
#[derive(Clone, Debug)]
pub struct DescentRun<P> {
    pub trace: Vec<IterTrace>,
    pub policy: P,
    /// True when the stopping tolerance was met (rather than `max_iter`).
    pub converged: bool,
}

impl<P> DescentRun<P> {
    pub fn final_record(&self) -> &IterTrace {
        self.trace.last().expect("drivers always log at least one record")
    }
}

/// Halve the step from `eta0` until `try_step` yields a feasible candidate
/// whose cost does not exceed `j_current`. `try_step` returns `None` for
/// infeasible candidates.
pub(crate) fn backtrack<P>(
    eta0: f64,
    j_current: f64,
    mut try_step: impl FnMut(f64) -> Option<(P, f64)>,
) -> Option<(P, f64, f64)> {
    let mut eta = eta0;
    for _ in 0..=MAX_BACKTRACKS {
        if let Some((cand, j)) = try_step(eta) {
            if j <= j_current {
                return Some((cand, j, eta));
            }
        }
        eta *= 0.5;
    }
    None
}
