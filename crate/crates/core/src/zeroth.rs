//! Gradient estimates from cost evaluations only, by smoothing over the
//! unit sphere, and a zeroth-order descent driver.
//!
//! Sample `i` of iteration `t` draws its direction from a ChaCha8 stream
//! keyed by `(seed, t, i)`, so estimates do not depend on evaluation order.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descent::{DescentRun, StepRule, StopRule, MAX_BACKTRACKS};
use crate::error::{Error, Result};
use crate::lqr::lqr_cost;
use crate::numerics::spectral_radius;
use crate::policy::{Plant, StaticGain};
use crate::trace::IterTrace;
use crate::Mat;

/// Infeasible perturbations are redrawn at most this many times per sample.
pub const MAX_RETRIES: usize = 50;
/// Name of the generator, echoed in run metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), stream = iteration, word offset = sample << 32";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    OnePoint,
    TwoPoint,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoConfig {
    /// Smoothing radius; `None` selects `1e-3·(1 + ‖θ‖)`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Samples per estimate; `None` selects `2d`.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub estimator: Estimator,
}

impl ZoConfig {
    pub fn new(estimator: Estimator, epsilon: f64, samples: usize, seed: u64) -> Self {
        ZoConfig {
            epsilon: Some(epsilon),
            samples: Some(samples),
            seed,
            estimator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Contract(format!("epsilon must be positive, got {e}")));
            }
        }
        if self.samples == Some(0) {
            return Err(Error::Contract("samples must be at least 1".into()));
        }
        Ok(())
    }

    fn resolve(&self, theta: &[f64]) -> (f64, usize) {
        let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        (
            self.epsilon.unwrap_or(1e-3 * (1.0 + norm)),
            self.samples.unwrap_or(2 * theta.len()),
        )
    }
}

/// Generator for sample `index` of iteration `iter`.
pub fn sample_rng(seed: u64, iter: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter);
    rng.set_word_pos(u128::from(index) << 32);
    rng
}

/// Uniform direction on the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_sphere(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(dim >= 1, "sample_sphere needs dim >= 1");
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn shifted(theta: &[f64], u: &[f64], s: f64) -> Vec<f64> {
    theta.iter().zip(u).map(|(t, ui)| t + s * ui).collect()
}

/// Per-sample coefficient `c` so that the sample contributes `c·U`, or
/// `None` when a required evaluation is infeasible.
fn sample_coeff(
    estimator: Estimator,
    costfn: &impl Fn(&[f64]) -> Option<f64>,
    base: Option<f64>,
    theta: &[f64],
    u: &[f64],
    eps: f64,
) -> Option<f64> {
    let d = theta.len() as f64;
    match estimator {
        Estimator::TwoPoint => {
            let plus = costfn(&shifted(theta, u, eps))?;
            let minus = costfn(&shifted(theta, u, -eps))?;
            Some((plus - minus) * d / (2.0 * eps))
        }
        Estimator::OnePoint => Some(costfn(&shifted(theta, u, eps))? * d / eps),
        Estimator::Baseline => Some((costfn(&shifted(theta, u, eps))? - base?) * d / eps),
    }
}

fn estimate(
    costfn: &impl Fn(&[f64]) -> Option<f64>,
    baselinefn: Option<&dyn Fn(&[f64]) -> Option<f64>>,
    theta: &[f64],
    cfg: &ZoConfig,
    iter: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if theta.is_empty() {
        return Err(Error::Contract("zeroth-order estimate of a zero-dimensional parameter".into()));
    }
    let (eps, samples) = cfg.resolve(theta);
    let base = match (cfg.estimator, baselinefn) {
        (Estimator::Baseline, Some(b)) => Some(
            b(theta).ok_or_else(|| Error::Infeasible("baseline is not evaluable at the current point".into()))?,
        ),
        (Estimator::Baseline, None) => {
            return Err(Error::Contract("baseline estimator needs a baseline function".into()));
        }
        _ => None,
    };
    let mut acc = vec![0.0; theta.len()];
    for i in 0..samples {
        let mut rng = sample_rng(cfg.seed, iter, i as u64);
        let mut accepted = None;
        for _ in 0..=MAX_RETRIES {
            let u = sample_sphere(theta.len(), &mut rng);
            if let Some(c) = sample_coeff(cfg.estimator, costfn, base, theta, &u, eps) {
                accepted = Some((c, u));
                break;
            }
        }
        let (c, u) = accepted.ok_or(Error::TooCloseToBoundary { retries: MAX_RETRIES })?;
        for (a, ui) in acc.iter_mut().zip(&u) {
            *a += c * ui;
        }
    }
    Ok(acc.into_iter().map(|a| a / samples as f64).collect())
}

/// `(1/N) Σ (J(θ + εUᵢ) − J(θ − εUᵢ)) · d/(2ε) · Uᵢ`. `costfn` returns `None`
/// at infeasible points; such samples are redrawn.
pub fn zo_grad_two_point(costfn: impl Fn(&[f64]) -> Option<f64>, theta: &[f64], cfg: &ZoConfig) -> Result<Vec<f64>> {
    let cfg = ZoConfig {
        estimator: Estimator::TwoPoint,
        ..*cfg
    };
    estimate(&costfn, None, theta, &cfg, 0)
}

/// `(1/N) Σ J(θ + εUᵢ) · d/ε · Uᵢ`
pub fn zo_grad_one_point(costfn: impl Fn(&[f64]) -> Option<f64>, theta: &[f64], cfg: &ZoConfig) -> Result<Vec<f64>> {
    let cfg = ZoConfig {
        estimator: Estimator::OnePoint,
        ..*cfg
    };
    estimate(&costfn, None, theta, &cfg, 0)
}

/// `(1/N) Σ (J(θ + εUᵢ) − b(θ)) · d/ε · Uᵢ`
pub fn zo_grad_baseline(
    costfn: impl Fn(&[f64]) -> Option<f64>,
    baselinefn: impl Fn(&[f64]) -> Option<f64>,
    theta: &[f64],
    cfg: &ZoConfig,
) -> Result<Vec<f64>> {
    let cfg = ZoConfig {
        estimator: Estimator::Baseline,
        ..*cfg
    };
    estimate(&costfn, Some(&baselinefn), theta, &cfg, 0)
}

/// Two-point estimate along explicitly given unit directions.
pub fn two_point_along(
    costfn: impl Fn(&[f64]) -> Option<f64>,
    theta: &[f64],
    eps: f64,
    dirs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; theta.len()];
    for u in dirs {
        let c = sample_coeff(Estimator::TwoPoint, &costfn, None, theta, u, eps)
            .ok_or_else(|| Error::Infeasible("explicit direction leaves the feasible set".into()))?;
        for (a, ui) in acc.iter_mut().zip(u) {
            *a += c * ui;
        }
    }
    Ok(acc.into_iter().map(|a| a / dirs.len() as f64).collect())
}

/// Descent with estimated gradients: `θ⁺ = θ − η ĝ`, with `η` halved (up to
/// the backtracking cap) until `θ⁺` is feasible. Cost increases are allowed;
/// the estimates are noisy. `rhofn` supplies the trace's `rho` field.
pub fn zo_gd_run(
    costfn: impl Fn(&[f64]) -> Option<f64>,
    rhofn: impl Fn(&[f64]) -> f64,
    theta0: &[f64],
    cfg: &ZoConfig,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<Vec<f64>>> {
    cfg.validate()?;
    let baseline = |t: &[f64]| costfn(t);
    let eta0 = match step_rule {
        StepRule::Fixed { eta } => eta.unwrap_or(1e-3),
        StepRule::Certificate { cap } => cap,
    };
    let mut theta = theta0.to_vec();
    let mut j = costfn(&theta).ok_or_else(|| Error::Infeasible("zeroth-order start is infeasible".into()))?;
    let mut trace = Vec::new();
    for iter in 0.. {
        let g = estimate(&costfn, Some(&baseline), &theta, cfg, iter as u64)?;
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rho = rhofn(&theta);
        if gn <= stop.tol || iter >= stop.max_iter {
            trace.push(IterTrace { iter, j, grad_norm: gn, step: 0.0, rho });
            return Ok(DescentRun {
                trace,
                policy: theta,
                converged: gn <= stop.tol,
            });
        }
        let mut eta = eta0;
        let mut next = None;
        for _ in 0..=MAX_BACKTRACKS {
            let cand = shifted(&theta, &g, -eta);
            if let Some(jc) = costfn(&cand) {
                next = Some((cand, jc));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, jc)) = next else {
            trace.push(IterTrace { iter, j, grad_norm: gn, step: 0.0, rho });
            return Err(Error::Stalled {
                iterations: iter,
                reason: "every halved step left the feasible set".into(),
                trace,
            });
        };
        trace.push(IterTrace { iter, j, grad_norm: gn, step: eta, rho });
        theta = cand;
        j = jc;
    }
    unreachable!("descent loop exits through max_iter")
}

/// Zeroth-order LQR: the gain is flattened row-major and feasibility is the
/// certified stability test.
pub fn zo_lqr_run(
    plant: &Plant,
    k0: &StaticGain,
    cfg: &ZoConfig,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<StaticGain>> {
    k0.require_certified()?;
    let (m, n) = (plant.m(), plant.n());
    let as_gain = |t: &[f64]| Mat::from_vec(m, n, t.to_vec()).ok();
    let cost = |t: &[f64]| as_gain(t).and_then(|k| lqr_cost(plant, &k));
    let rho = |t: &[f64]| {
        as_gain(t)
            .and_then(|k| spectral_radius(&(plant.a() + &(plant.b() * &k))).ok())
            .unwrap_or(f64::INFINITY)
    };
    let run = zo_gd_run(cost, rho, k0.k().as_slice(), cfg, step_rule, stop)?;
    let policy = StaticGain::certify(plant, Mat::from_vec(m, n, run.policy)?)
        .map_err(|_| Error::Internal("zeroth-order iterate lost certification".into()))?;
    Ok(DescentRun {
        trace: run.trace,
        policy,
        converged: run.converged,
    })
}
