//! LQR cost `J(K) = ½ tr(P_K Σ)` over stabilizing static gains, its
//! Euclidean and Lyapunov-metric (Riemannian) gradients, Hessian-vector
//! products, the Riccati oracle, Hewer's iteration, and certified descent.

use serde::{Deserialize, Serialize};

use crate::descent::{backtrack, DescentRun, StepRule, StopRule};
use crate::error::{Error, Result};
use crate::lyapunov::{dlyap_diff, lyap};
use crate::numerics::{solve_linear, spectral_norm, spectral_radius};
use crate::policy::{is_stabilizing_static, stability_certificate, MetricChoice, Plant, StaticGain};
use crate::trace::IterTrace;
use crate::Mat;

const DARE_MAX_ITER: usize = 100_000;
const DARE_TOL: f64 = 1e-12;

/// Everything one LQR evaluation produces.
#[derive(Clone, Debug)]
pub struct LqrEval {
    /// `½ tr(P_K Σ)`
    pub j: f64,
    /// `½ tr((Q + KᵀRK) Y_K)`; agrees with `j` by the trace identity.
    pub j_dual: f64,
    /// `L(A_clᵀ, Q + KᵀRK)`
    pub p_k: Mat,
    /// `L(A_cl, Σ)`
    pub y_k: Mat,
    pub a_cl: Mat,
}

pub fn lqr_eval(plant: &Plant, k: &StaticGain) -> Result<LqrEval> {
    k.require_certified()?;
    eval_unchecked(plant, k.k())
}

fn eval_unchecked(plant: &Plant, k: &Mat) -> Result<LqrEval> {
    let a_cl = plant.a() + &(plant.b() * k);
    let stage = plant.q() + &(&(&k.transpose() * plant.r()) * k);
    let p_k = lyap(&a_cl.transpose(), &stage)?;
    let y_k = lyap(&a_cl, plant.sigma())?;
    let j = 0.5 * (&p_k * plant.sigma()).trace();
    let j_dual = 0.5 * (&stage * &y_k).trace();
    Ok(LqrEval { j, j_dual, p_k, y_k, a_cl })
}

/// Cost of an arbitrary gain, `None` outside the stabilizing set.
pub fn lqr_cost(plant: &Plant, k: &Mat) -> Option<f64> {
    if !is_stabilizing_static(plant, k) {
        return None;
    }
    eval_unchecked(plant, k).ok().map(|e| e.j)
}

fn riemannian_from_eval(plant: &Plant, k: &Mat, ev: &LqrEval) -> Mat {
    &(plant.r() * k) + &(&(&plant.b().transpose() * &ev.p_k) * &ev.a_cl)
}

/// `grad J(K) = RK + Bᵀ P_K A_cl` (gradient under the Lyapunov metric).
pub fn lqr_grad_riemannian(plant: &Plant, k: &StaticGain) -> Result<Mat> {
    let ev = lqr_eval(plant, k)?;
    Ok(riemannian_from_eval(plant, k.k(), &ev))
}

/// `∇̄J(K) = (RK + Bᵀ P_K A_cl) Y_K`
pub fn lqr_grad_euclidean(plant: &Plant, k: &StaticGain) -> Result<Mat> {
    let ev = lqr_eval(plant, k)?;
    Ok(&riemannian_from_eval(plant, k.k(), &ev) * &ev.y_k)
}

fn s_map_from(ev: &LqrEval, grad: &Mat, v: &Mat) -> Result<Mat> {
    let vg = &v.transpose() * grad;
    lyap(&ev.a_cl.transpose(), &(&vg + &vg.transpose()))
}

/// `S_K(V) = L(A_clᵀ, Vᵀ grad J + (grad J)ᵀ V)`: the directional derivative
/// of `K ↦ P_K` along `V`.
pub fn s_map(plant: &Plant, k: &StaticGain, v: &Mat) -> Result<Mat> {
    let ev = lqr_eval(plant, k)?;
    let grad = riemannian_from_eval(plant, k.k(), &ev);
    s_map_from(&ev, &grad, v)
}

fn hvp_pseudo_from(plant: &Plant, ev: &LqrEval, grad: &Mat, v: &Mat) -> Result<Mat> {
    let bt = plant.b().transpose();
    let s = s_map_from(ev, grad, v)?;
    let curv = plant.r() + &(&(&bt * &ev.p_k) * plant.b());
    Ok(&(&curv * v) + &(&(&bt * &s) * &ev.a_cl))
}

/// Directional derivative of `K ↦ grad J(K)` along `V`:
/// `(R + Bᵀ P_K B) V + Bᵀ S_K(V) A_cl`.
pub fn lqr_hvp_pseudo(plant: &Plant, k: &StaticGain, v: &Mat) -> Result<Mat> {
    let ev = lqr_eval(plant, k)?;
    let grad = riemannian_from_eval(plant, k.k(), &ev);
    hvp_pseudo_from(plant, &ev, &grad, v)
}

/// Euclidean Hessian-vector product, the directional derivative of
/// `∇̄J = grad·Y_K`: `hvp_pseudo(V)·Y_K + grad·dY` with
/// `dY = dL_{(A_cl, Σ)}[BV, 0]`.
pub fn lqr_hvp_euclidean(plant: &Plant, k: &StaticGain, v: &Mat) -> Result<Mat> {
    let ev = lqr_eval(plant, k)?;
    let grad = riemannian_from_eval(plant, k.k(), &ev);
    let first = &hvp_pseudo_from(plant, &ev, &grad, v)? * &ev.y_k;
    let bv = plant.b() * v;
    let dy = dlyap_diff(&ev.a_cl, plant.sigma(), &bv, &Mat::zeros(plant.n(), plant.n()))?;
    Ok(&first + &(&grad * &dy))
}

/// Two-term bilinear Hessian form
/// `⟨Bᵀ S_K(W) A_cl, V⟩ + ⟨(R + Bᵀ P_K B) V + Bᵀ S_K(V) A_cl, W⟩`
/// evaluated in the chosen pairing (Frobenius or Lyapunov). Under the
/// Lyapunov pairing it equals `⟨∇̄²J[V], W⟩_F` exactly.
pub fn lqr_hessian_bilinear(plant: &Plant, k: &StaticGain, v: &Mat, w: &Mat, pairing: MetricChoice) -> Result<f64> {
    let ev = lqr_eval(plant, k)?;
    let grad = riemannian_from_eval(plant, k.k(), &ev);
    let bt = plant.b().transpose();
    let first = &(&bt * &s_map_from(&ev, &grad, w)?) * &ev.a_cl;
    let second = hvp_pseudo_from(plant, &ev, &grad, v)?;
    let pair = |x: &Mat, y: &Mat| -> Result<f64> {
        match pairing {
            MetricChoice::Frobenius => Ok(x.dot(y)),
            MetricChoice::Lyapunov => Ok((&(&x.transpose() * y) * &ev.y_k).trace()),
            MetricChoice::Km { .. } => Err(Error::Contract("KM pairing applies to dynamic policies only".into())),
        }
    };
    Ok(pair(&first, v)? + pair(&second, w)?)
}

/// Riccati value iteration from `P₀ = Q`; returns `(P*, K*)` with
/// `K* = −(R + Bᵀ P* B)⁻¹ Bᵀ P* A` certified.
pub fn dare_solve(plant: &Plant) -> Result<(Mat, StaticGain)> {
    let (a, b, q, r) = (plant.a(), plant.b(), plant.q(), plant.r());
    let (at, bt) = (a.transpose(), b.transpose());
    let mut p = q.clone();
    for it in 0..DARE_MAX_ITER {
        let btpa = &(&bt * &p) * a;
        let gain = solve_linear(&(r + &(&(&bt * &p) * b)), &btpa)?;
        let next = (&(q + &(&(&at * &p) * a)) - &(&btpa.transpose() * &gain)).symmetrize();
        if !next.is_finite() {
            return Err(Error::StabilizabilitySuspect { iterations: it + 1 });
        }
        let delta = (&next - &p).frobenius_norm();
        p = next;
        if delta <= DARE_TOL * (1.0 + p.frobenius_norm()) {
            let k_star = -&optimal_gain(plant, &p)?;
            let k_star = StaticGain::certify(plant, k_star)
                .map_err(|_| Error::StabilizabilitySuspect { iterations: it + 1 })?;
            return Ok((p, k_star));
        }
    }
    Err(Error::StabilizabilitySuspect { iterations: DARE_MAX_ITER })
}

/// `(R + Bᵀ P B)⁻¹ Bᵀ P A`
fn optimal_gain(plant: &Plant, p: &Mat) -> Result<Mat> {
    let bt = plant.b().transpose();
    let lhs = plant.r() + &(&(&bt * p) * plant.b());
    solve_linear(&lhs, &(&(&bt * p) * plant.a()))
}

/// Hewer policy iteration `K⁺ = −(R + Bᵀ P_K B)⁻¹ Bᵀ P_K A`; the unit step
/// is asserted to remain stabilizing.
pub fn hewer_step(plant: &Plant, k: &StaticGain) -> Result<StaticGain> {
    let ev = lqr_eval(plant, k)?;
    let next = -&optimal_gain(plant, &ev.p_k)?;
    StaticGain::certify(plant, next).map_err(|_| Error::Internal("Hewer update left the stabilizing set".into()))
}

/// Search direction for [`gd_run`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `−∇̄J`
    Euclidean,
    /// `−grad J` (Lyapunov metric)
    Riemannian,
    /// `V` solving `(R + Bᵀ P_K B) V = −grad J`; with unit steps this is
    /// Hewer's iteration.
    PseudoNewton,
}

/// Default fixed step `1e-3 / ‖R‖₂`.
pub fn default_fixed_step(plant: &Plant) -> f64 {
    1e-3 / spectral_norm(plant.r())
}

/// Search direction and the norm reported as `grad_norm`.
pub(crate) type DirectionFn<'a> = dyn Fn(&StaticGain, &LqrEval) -> Result<(Mat, f64)> + 'a;

/// Static-gain descent loop shared by the unconstrained and structured
/// drivers. Every accepted iterate is certified and does not increase `J`.
pub(crate) fn static_descent(
    plant: &Plant,
    k0: &StaticGain,
    direction: &DirectionFn<'_>,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<StaticGain>> {
    k0.require_certified()?;
    let mut k = k0.clone();
    let mut trace = Vec::new();
    for iter in 0.. {
        let ev = lqr_eval(plant, &k)?;
        let rho = spectral_radius(&ev.a_cl)?;
        let (dir, grad_norm) = direction(&k, &ev)?;
        if grad_norm <= stop.tol || iter >= stop.max_iter {
            trace.push(IterTrace {
                iter,
                j: ev.j,
                grad_norm,
                step: 0.0,
                rho,
            });
            return Ok(DescentRun {
                trace,
                policy: k,
                converged: grad_norm <= stop.tol,
            });
        }
        let eta0 = match step_rule {
            StepRule::Fixed { eta } => eta.unwrap_or_else(|| default_fixed_step(plant)),
            StepRule::Certificate { cap } => cap.min(stability_certificate(plant, &k, &dir)?),
        };
        let accepted = backtrack(eta0, ev.j, |eta| {
            let cand = StaticGain::certify(plant, k.k() + &dir.scale(eta)).ok()?;
            let j = lqr_eval(plant, &cand).ok()?.j;
            Some((cand, j))
        });
        let Some((next, _, eta)) = accepted else {
            trace.push(IterTrace {
                iter,
                j: ev.j,
                grad_norm,
                step: 0.0,
                rho,
            });
            return Err(Error::Stalled {
                iterations: iter,
                reason: "no stabilizing non-increasing step after backtracking".into(),
                trace,
            });
        };
        trace.push(IterTrace {
            iter,
            j: ev.j,
            grad_norm,
            step: eta,
            rho,
        });
        k = next;
    }
    unreachable!("descent loop exits through max_iter")
}

/// Gradient descent over stabilizing static gains.
pub fn gd_run(
    plant: &Plant,
    k0: &StaticGain,
    direction: Direction,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<StaticGain>> {
    let dir_fn = move |k: &StaticGain, ev: &LqrEval| -> Result<(Mat, f64)> {
        let grad = riemannian_from_eval(plant, k.k(), ev);
        Ok(match direction {
            Direction::Euclidean => {
                let g = &grad * &ev.y_k;
                let n = g.frobenius_norm();
                (-g, n)
            }
            Direction::Riemannian => {
                let n = grad.frobenius_norm();
                (-grad, n)
            }
            Direction::PseudoNewton => {
                let bt = plant.b().transpose();
                let h = plant.r() + &(&(&bt * &ev.p_k) * plant.b());
                let v = solve_linear(&h, &-&grad)?;
                (v, grad.frobenius_norm())
            }
        })
    };
    static_descent(plant, k0, &dir_fn, step_rule, stop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_scalar() -> Plant {
        Plant::scalar(1.0, 1.0, 1.0)
    }

    fn gain(p: &Plant, k: f64) -> StaticGain {
        StaticGain::certify(p, Mat::scalar(k)).unwrap()
    }

    #[test]
    fn scalar_eval_closed_forms() {
        let p = unit_scalar();
        let e = lqr_eval(&p, &gain(&p, -1.0)).unwrap();
        assert!((e.y_k[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((e.p_k[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((e.j - 1.0).abs() < 1e-14);
        let e = lqr_eval(&p, &gain(&p, -0.5)).unwrap();
        assert!((e.y_k[(0, 0)] - 4.0 / 3.0).abs() < 1e-13);
        assert!((e.p_k[(0, 0)] - 5.0 / 3.0).abs() < 1e-13);
        assert!((e.j - 5.0 / 6.0).abs() < 1e-13);
        assert!((e.j - e.j_dual).abs() < 1e-13);
    }

    #[test]
    fn uncertified_rejected() {
        let p = unit_scalar();
        assert!(matches!(
            lqr_eval(&p, &StaticGain::uncertified(Mat::scalar(-1.0))),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn scalar_gradients() {
        let p = unit_scalar();
        let k = gain(&p, -1.0);
        assert!((lqr_grad_riemannian(&p, &k).unwrap()[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((lqr_grad_euclidean(&p, &k).unwrap()[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_hvp_pseudo() {
        let p = unit_scalar();
        let k = gain(&p, -1.0);
        assert!((s_map(&p, &k, &Mat::scalar(1.0)).unwrap()[(0, 0)] + 2.0).abs() < 1e-14);
        assert!((lqr_hvp_pseudo(&p, &k, &Mat::scalar(1.0)).unwrap()[(0, 0)] - 3.0).abs() < 1e-14);
        assert_eq!(lqr_hvp_pseudo(&p, &k, &Mat::scalar(0.0)).unwrap()[(0, 0)], 0.0);
        assert_eq!(lqr_hvp_euclidean(&p, &k, &Mat::scalar(0.0)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn dare_golden_ratio() {
        let p = unit_scalar();
        let (pstar, kstar) = dare_solve(&p).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((pstar[(0, 0)] - phi).abs() < 1e-10);
        assert!((kstar.k()[(0, 0)] + 1.0 / phi).abs() < 1e-10);
        assert!(lqr_grad_riemannian(&p, &kstar).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn dare_zero_dynamics() {
        let p = Plant::scalar(0.0, 1.0, 1.0);
        let (pstar, kstar) = dare_solve(&p).unwrap();
        assert!((pstar[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(kstar.k()[(0, 0)], 0.0);
    }

    #[test]
    fn dare_unstabilizable() {
        let p = Plant::scalar(1.5, 0.0, 1.0);
        assert!(matches!(dare_solve(&p), Err(Error::StabilizabilitySuspect { .. })));
    }

    #[test]
    fn hewer_hand_values() {
        let p = unit_scalar();
        let k1 = hewer_step(&p, &gain(&p, -1.0)).unwrap();
        assert!((k1.k()[(0, 0)] + 2.0 / 3.0).abs() < 1e-13);
        let k2 = hewer_step(&p, &k1).unwrap();
        assert!((k2.k()[(0, 0)] + 13.0 / 21.0).abs() < 1e-13);
        let (_, kstar) = dare_solve(&p).unwrap();
        assert!((hewer_step(&p, &kstar).unwrap().k() - kstar.k()).max_abs() < 1e-10);
    }

    #[test]
    fn gd_from_optimum_stops_immediately() {
        let p = unit_scalar();
        let (_, kstar) = dare_solve(&p).unwrap();
        let run = gd_run(&p, &kstar, Direction::Euclidean, StepRule::default(), StopRule { tol: 1e-8, max_iter: 100 }).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert!(run.converged);
    }

    #[test]
    fn pseudo_newton_is_hewer() {
        let p = unit_scalar();
        let run = gd_run(
            &p,
            &gain(&p, -1.0),
            Direction::PseudoNewton,
            StepRule::Fixed { eta: Some(1.0) },
            StopRule { tol: 0.0, max_iter: 3 },
        )
        .unwrap();
        assert!(run.trace[..3].iter().all(|t| t.step == 1.0));
        let mut k = gain(&p, -1.0);
        for _ in 0..3 {
            k = hewer_step(&p, &k).unwrap();
        }
        assert!((run.policy.k() - k.k()).max_abs() < 1e-14);
    }
}
