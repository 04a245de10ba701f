//! State-feedback H∞ cost
//! `J∞(K) = sup_ω λ_max(M(ω)* (Q + KᵀRK) M(ω))`, `M(ω) = (e^{jω} I − A − BK)⁻¹`,
//! evaluated by a frequency sweep with golden-section refinement, and a
//! gradient-sampling descent driver.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::descent::{backtrack, DescentRun, StepRule, StopRule};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_top_eigenpair, solve_linear, spectral_radius};
use crate::policy::{stability_certificate, Plant, StaticGain};
use crate::trace::IterTrace;
use crate::{CMat, Mat};

pub const MIN_GRID: usize = 64;
pub const DEFAULT_GRID: usize = 2048;
pub const DEFAULT_REFINE_TOL: f64 = 1e-10;
/// Number of grid peaks refined.
const REFINE_PEAKS: usize = 3;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Clone, Debug, PartialEq)]
pub struct HinfEval {
    pub j: f64,
    /// Maximizing frequency in `[0, π]`; `2π − ω*` attains the same value.
    pub omega_star: f64,
    pub grid_size: usize,
    pub refined: bool,
}

struct Response {
    value: f64,
    /// `M(ω) u` for the top eigenvector `u`.
    z: Vec<Complex<f64>>,
    /// `M(ω)`
    m: CMat,
}

fn weight(plant: &Plant, k: &Mat) -> Mat {
    plant.q() + &(&(&k.transpose() * plant.r()) * k)
}

fn response(a_cl: &Mat, s: &Mat, omega: f64) -> Result<Response> {
    let n = a_cl.rows();
    let e = Complex::from_polar(1.0, omega);
    let shifted = CMat::from_fn(n, n, |i, j| {
        let d = if i == j { e } else { Complex::new(0.0, 0.0) };
        d - Complex::new(a_cl[(i, j)], 0.0)
    });
    let eye = CMat::from_fn(n, n, |i, j| Complex::new(if i == j { 1.0 } else { 0.0 }, 0.0));
    let m = shifted
        .solve(&eye)
        .map_err(|_| Error::Internal(format!("resolvent singular at omega = {omega}")))?;
    let sm = CMat::from_real(s).matmul(&m)?;
    let raw = m.adjoint().matmul(&sm)?;
    let h = CMat::from_fn(n, n, |i, j| (raw.get(i, j) + raw.get(j, i).conj()) * 0.5);
    let (value, u) = hermitian_top_eigenpair(&h)?;
    let z = (0..n)
        .map(|i| (0..n).fold(Complex::new(0.0, 0.0), |acc, j| acc + m.get(i, j) * u[j]))
        .collect();
    Ok(Response { value, z, m })
}

/// `λ_max(M(ω)* (Q + KᵀRK) M(ω))` at one frequency.
pub fn hinf_freq_response(plant: &Plant, k: &StaticGain, omega: f64) -> Result<f64> {
    k.require_certified()?;
    Ok(response(&k.closed_loop(plant), &weight(plant, k.k()), omega)?.value)
}

fn golden_max(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

fn sweep(a_cl: &Mat, s: &Mat, grid: usize, refine_tol: f64) -> Result<HinfEval> {
    if grid < MIN_GRID {
        return Err(Error::Contract(format!("frequency grid {grid} below minimum {MIN_GRID}")));
    }
    if !(refine_tol > 0.0) {
        return Err(Error::Contract("refinement tolerance must be positive".into()));
    }
    let step = std::f64::consts::PI / (grid - 1) as f64;
    let values: Vec<f64> = (0..grid)
        .map(|i| response(a_cl, s, i as f64 * step).map(|r| r.value))
        .collect::<Result<_>>()?;
    let (mut best_i, mut best) = (0, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best_i = i;
            best = v;
        }
    }
    let mut omega_star = best_i as f64 * step;

    // local maxima of the sampled curve, highest first
    let mut peaks: Vec<usize> = (0..grid)
        .filter(|&i| (i == 0 || values[i] >= values[i - 1]) && (i + 1 == grid || values[i] >= values[i + 1]))
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    peaks.truncate(REFINE_PEAKS);

    let f = |w: f64| response(a_cl, s, w).map(|r| r.value);
    let mut refined = false;
    for i in peaks {
        let lo = i.saturating_sub(1) as f64 * step;
        let hi = (i + 1).min(grid - 1) as f64 * step;
        let (w, v) = golden_max(&f, lo, hi, refine_tol)?;
        refined = true;
        if v > best {
            best = v;
            omega_star = w;
        }
    }
    Ok(HinfEval {
        j: best,
        omega_star,
        grid_size: grid,
        refined,
    })
}

/// Sweep `grid` uniform frequencies over `[0, π]` (the response is symmetric
/// about π), then golden-section refine around the top grid peaks.
pub fn hinf_cost(plant: &Plant, k: &StaticGain, grid: usize, refine_tol: f64) -> Result<HinfEval> {
    k.require_certified()?;
    sweep(&k.closed_loop(plant), &weight(plant, k.k()), grid, refine_tol)
}

/// Cost of an arbitrary gain at the default grid, `None` outside the
/// stabilizing set.
pub fn hinf_value(plant: &Plant, k: &Mat) -> Option<f64> {
    let g = StaticGain::certify(plant, k.clone()).ok()?;
    hinf_cost(plant, &g, DEFAULT_GRID, DEFAULT_REFINE_TOL).ok().map(|e| e.j)
}

/// Gradient of the active branch at the maximizing frequency:
/// `2 Re[conj(Bᵀ M* S z + R K z) zᵀ]` with `z = M u`, `u` a top eigenvector.
/// Where the maximizer or the top eigenvalue is not unique this is one
/// element of the Clarke subdifferential.
pub fn hinf_grad(plant: &Plant, k: &StaticGain, grid: usize, refine_tol: f64) -> Result<(HinfEval, Mat)> {
    let ev = hinf_cost(plant, k, grid, refine_tol)?;
    let s = weight(plant, k.k());
    let r = response(&k.closed_loop(plant), &s, ev.omega_star)?;
    let (n, m) = (plant.n(), plant.m());
    let sz: Vec<Complex<f64>> = (0..n)
        .map(|i| (0..n).fold(Complex::new(0.0, 0.0), |acc, j| acc + r.z[j] * s[(i, j)]))
        .collect();
    // M* S z
    let msz: Vec<Complex<f64>> = (0..n)
        .map(|i| (0..n).fold(Complex::new(0.0, 0.0), |acc, j| acc + r.m.get(j, i).conj() * sz[j]))
        .collect();
    let kz: Vec<Complex<f64>> = (0..m)
        .map(|i| (0..n).fold(Complex::new(0.0, 0.0), |acc, j| acc + r.z[j] * k.k()[(i, j)]))
        .collect();
    let a: Vec<Complex<f64>> = (0..m)
        .map(|i| {
            let bt = (0..n).fold(Complex::new(0.0, 0.0), |acc, j| acc + msz[j] * plant.b()[(j, i)]);
            let rk = (0..m).fold(Complex::new(0.0, 0.0), |acc, j| acc + kz[j] * plant.r()[(i, j)]);
            bt + rk
        })
        .collect();
    let g = Mat::from_fn(m, n, |i, j| 2.0 * (a[i].conj() * r.z[j]).re);
    Ok((ev, g))
}

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
/// Returns the point and its convex weights.
pub fn min_norm_hull(points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let np = points.len();
    if np == 0 {
        return Err(Error::Contract("min_norm_hull of an empty set".into()));
    }
    let dim = points[0].len();
    let scale = points.iter().map(|p| dot(p, p)).fold(0.0, f64::max);
    let eps = 1e-15 * scale.max(f64::MIN_POSITIVE);
    let combine = |active: &[usize], w: &[f64]| {
        let mut x = vec![0.0; dim];
        for (&i, &wi) in active.iter().zip(w) {
            for (xk, pk) in x.iter_mut().zip(&points[i]) {
                *xk += wi * pk;
            }
        }
        x
    };
    let start = (0..np).min_by(|&a, &b| dot(&points[a], &points[a]).total_cmp(&dot(&points[b], &points[b]))).expect("nonempty");
    let mut active = vec![start];
    let mut lam = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..(50 * np + 50) {
        let xx = dot(&x, &x);
        if xx <= eps {
            break;
        }
        let j = (0..np).min_by(|&a, &b| dot(&x, &points[a]).total_cmp(&dot(&x, &points[b]))).expect("nonempty");
        if xx - dot(&x, &points[j]) <= 1e-12 * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lam.push(0.0);
        loop {
            // affine minimum-norm point of the active set
            let s = active.len();
            let mut kkt = Mat::zeros(s + 1, s + 1);
            let mut rhs = Mat::zeros(s + 1, 1);
            for a in 0..s {
                for b in 0..s {
                    kkt[(a, b)] = dot(&points[active[a]], &points[active[b]]);
                }
                kkt[(a, s)] = 1.0;
                kkt[(s, a)] = 1.0;
            }
            rhs[(s, 0)] = 1.0;
            let Ok(sol) = solve_linear(&kkt, &rhs) else {
                // affinely dependent: drop the newcomer and stop
                active.pop();
                lam.pop();
                let w = lam.clone();
                return Ok((combine(&active, &w), scatter(np, &active, &w)));
            };
            let mu: Vec<f64> = (0..s).map(|a| sol[(a, 0)]).collect();
            if mu.iter().all(|&v| v > 0.0) {
                lam = mu;
                break;
            }
            let mut theta = 1.0_f64;
            for a in 0..s {
                if mu[a] <= 0.0 {
                    let denom = lam[a] - mu[a];
                    if denom > 0.0 {
                        theta = theta.min(lam[a] / denom);
                    }
                }
            }
            for a in 0..s {
                lam[a] += theta * (mu[a] - lam[a]);
            }
            let mut keep_a = Vec::new();
            let mut keep_l = Vec::new();
            for a in 0..s {
                if lam[a] > 1e-15 {
                    keep_a.push(active[a]);
                    keep_l.push(lam[a]);
                }
            }
            if keep_a.is_empty() {
                keep_a.push(active[0]);
                keep_l.push(1.0);
            }
            let total: f64 = keep_l.iter().sum();
            active = keep_a;
            lam = keep_l.into_iter().map(|v| v / total).collect();
        }
        x = combine(&active, &lam);
    }
    Ok((x, scatter(np, &active, &lam)))
}

fn scatter(np: usize, active: &[usize], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; np];
    for (&i, &wi) in active.iter().zip(w) {
        out[i] = wi;
    }
    out
}

/// Options of the gradient-sampling driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Perturbations per iteration; `None` selects `2·mn + 2`.
    pub sample_count: Option<usize>,
    /// Initial sampling radius; `None` selects `1e-4·(1 + ‖K‖_F)`.
    pub sample_radius: Option<f64>,
    /// The radius shrinks tenfold at approximate stationarity until it
    /// falls below `min_radius_ratio` times its initial value.
    pub min_radius_ratio: f64,
    pub grid: usize,
    pub refine_tol: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            sample_count: None,
            sample_radius: None,
            min_radius_ratio: 1e-8,
            grid: DEFAULT_GRID,
            refine_tol: DEFAULT_REFINE_TOL,
            seed: 0,
        }
    }
}

/// Uniform point of the Frobenius ball of radius `r`.
fn ball_sample(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> Mat {
    let d = rows * cols;
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    Mat::from_vec(rows, cols, g.into_iter().map(|x| x * radius / norm).collect()).expect("finite samples")
}

/// Gradient sampling: at each iterate, gradients at `K` and at random points
/// of a small ball around it are combined into their minimum-norm convex
/// combination `g`. The step along `−g` is capped by the stability
/// certificate and by twice the previous accepted step (steps shrink
/// geometrically near a kink), then halved until `J∞` does not increase. When `‖g‖ ≤ tol` the
/// radius shrinks; the run converges once `‖g‖ ≤ tol` at the smallest radius.
pub fn hinf_descent_run(
    plant: &Plant,
    k0: &StaticGain,
    cfg: SamplingConfig,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<DescentRun<StaticGain>> {
    k0.require_certified()?;
    let (m, n) = (plant.m(), plant.n());
    let count = cfg.sample_count.unwrap_or(2 * m * n + 2);
    let r0 = cfg.sample_radius.unwrap_or(1e-4 * (1.0 + k0.k().frobenius_norm()));
    let r_min = r0 * cfg.min_radius_ratio;
    let mut radius = r0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut k = k0.clone();
    let mut trace = Vec::new();
    let mut last_eta = f64::INFINITY;
    for iter in 0.. {
        let (ev, g0) = hinf_grad(plant, &k, cfg.grid, cfg.refine_tol)?;
        let rho = spectral_radius(&k.closed_loop(plant))?;
        let (dir, dnorm) = loop {
            let mut grads = vec![g0.as_slice().to_vec()];
            for _ in 0..count {
                let cand = k.k() + &ball_sample(&mut rng, m, n, radius);
                if let Ok(cg) = StaticGain::certify(plant, cand) {
                    grads.push(hinf_grad(plant, &cg, cfg.grid, cfg.refine_tol)?.1.into_vec());
                }
            }
            let (g, _) = min_norm_hull(&grads)?;
            let g = Mat::from_vec(m, n, g)?;
            let norm = g.frobenius_norm();
            if norm <= stop.tol && radius > r_min {
                radius *= 0.1;
                continue;
            }
            break (-g, norm);
        };
        let record = |step| IterTrace {
            iter,
            j: ev.j,
            grad_norm: dnorm,
            step,
            rho,
        };
        if dnorm <= stop.tol || iter >= stop.max_iter {
            trace.push(record(0.0));
            return Ok(DescentRun {
                trace,
                policy: k,
                converged: dnorm <= stop.tol,
            });
        }
        let eta0 = match step_rule {
            StepRule::Fixed { eta } => eta.unwrap_or(1e-3),
            StepRule::Certificate { cap } => cap.min(stability_certificate(plant, &k, &dir)?),
        }
        .min(2.0 * last_eta);
        let accepted = backtrack(eta0, ev.j, |eta| {
            let cand = StaticGain::certify(plant, k.k() + &dir.scale(eta)).ok()?;
            let j = hinf_cost(plant, &cand, cfg.grid, cfg.refine_tol).ok()?.j;
            Some((cand, j))
        });
        match accepted {
            Some((next, _, eta)) => {
                trace.push(record(eta));
                last_eta = eta;
                k = next;
            }
            None if radius > r_min => {
                // no descent along the sampled direction; resample closer in
                radius *= 0.1;
                trace.push(record(0.0));
            }
            None => {
                trace.push(record(0.0));
                return Err(Error::Stalled {
                    iterations: iter,
                    reason: "no non-increasing step along the sampled direction".into(),
                    trace,
                });
            }
        }
    }
    unreachable!("descent loop exits through max_iter")
}
