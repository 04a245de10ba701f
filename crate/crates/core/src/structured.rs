//! LQR over a linear subspace of gain space (sparsity patterns, static
//! output feedback). The constrained gradient is the metric-orthogonal
//! projection of the unconstrained one onto the subspace.

use crate::descent::{DescentRun, StepRule, StopRule};
use crate::error::{Error, Result};
use crate::lqr::{lqr_eval, static_descent, LqrEval};
use crate::numerics::solve_linear;
use crate::policy::{ConstraintSubspace, MetricChoice, Plant, StaticGain};
use crate::Mat;

const MEMBERSHIP_TOL: f64 = 1e-12;

fn check_member(sub: &ConstraintSubspace, k: &Mat) -> Result<()> {
    if !sub.contains(k, MEMBERSHIP_TOL) {
        return Err(Error::Contract("gain does not lie in the constraint subspace".into()));
    }
    Ok(())
}

/// Gram solve for the coefficients of the metric projection of `v`.
fn project_with(sub: &ConstraintSubspace, v: &Mat, metric: MetricChoice, y_k: &Mat) -> Result<Mat> {
    if v.shape() != sub.shape() {
        return Err(Error::dim("tangential_project", format!("{:?}", sub.shape()), format!("{:?}", v.shape())));
    }
    let inner = |x: &Mat, y: &Mat| -> Result<f64> {
        match metric {
            MetricChoice::Frobenius => Ok(x.dot(y)),
            MetricChoice::Lyapunov => Ok(x.dot(&(y * y_k))),
            MetricChoice::Km { .. } => Err(Error::Contract("KM metric applies to dynamic policies only".into())),
        }
    };
    let basis = sub.basis();
    let d = basis.len();
    let mut gram = Mat::zeros(d, d);
    let mut rhs = Mat::zeros(d, 1);
    for i in 0..d {
        for j in 0..=i {
            let g = inner(&basis[i], &basis[j])?;
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
        rhs[(i, 0)] = inner(&basis[i], v)?;
    }
    let coeffs = solve_linear(&gram, &rhs).map_err(|e| match e {
        Error::Singular { .. } => Error::Contract("constraint basis has a singular Gram matrix".into()),
        other => other,
    })?;
    Ok(sub.combine(coeffs.as_slice()))
}

/// `argmin_{W ∈ span(basis)} ‖V − W‖²` in the chosen metric; the Lyapunov
/// metric weights by `Y_K`.
pub fn tangential_project(
    plant: &Plant,
    k: &StaticGain,
    v: &Mat,
    sub: &ConstraintSubspace,
    metric: MetricChoice,
) -> Result<Mat> {
    check_member(sub, k.k())?;
    let ev = lqr_eval(plant, k)?;
    project_with(sub, v, metric, &ev.y_k)
}

fn grad_from_eval(plant: &Plant, k: &Mat, ev: &LqrEval, sub: &ConstraintSubspace, metric: MetricChoice) -> Result<Mat> {
    let riem = &(plant.r() * k) + &(&(&plant.b().transpose() * &ev.p_k) * &ev.a_cl);
    let unconstrained = match metric {
        MetricChoice::Lyapunov => riem,
        _ => &riem * &ev.y_k,
    };
    project_with(sub, &unconstrained, metric, &ev.y_k)
}

/// Constrained gradient: the Riemannian gradient projected in the Lyapunov
/// metric, or the Euclidean gradient projected in the Frobenius metric.
pub fn structured_grad(plant: &Plant, k: &StaticGain, sub: &ConstraintSubspace, metric: MetricChoice) -> Result<Mat> {
    check_member(sub, k.k())?;
    let ev = lqr_eval(plant, k)?;
    grad_from_eval(plant, k.k(), &ev, sub, metric)
}

/// Certified projected descent. Steps are combinations of basis elements,
/// so iterates stay in the subspace without re-projection.
pub fn structured_gd_run(
    plant: &Plant,
    k0: &StaticGain,
    sub: &ConstraintSubspace,
    metric: MetricChoice,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<StaticGain>> {
    metric.validate()?;
    check_member(sub, k0.k())?;
    let dir_fn = |k: &StaticGain, ev: &LqrEval| -> Result<(Mat, f64)> {
        let g = grad_from_eval(plant, k.k(), ev, sub, metric)?;
        let n = g.frobenius_norm();
        Ok((-g, n))
    };
    let run = static_descent(plant, k0, &dir_fn, step_rule, stop)?;
    if !sub.contains(run.policy.k(), 0.0) && matches!(sub.kind(), crate::policy::ConstraintKind::Sparsity(_)) {
        return Err(Error::Internal("structured descent left the sparsity pattern".into()));
    }
    Ok(run)
}
