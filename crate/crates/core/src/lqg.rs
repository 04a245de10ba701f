//! Dynamic output-feedback LQG: closed-loop assembly, cost and gradient,
//! the similarity action on controllers, minimality, the Krishnaprasad-Martin
//! (KM) metric and Euclidean / KM-Riemannian descent.

use serde::{Deserialize, Serialize};

use crate::descent::{backtrack, DescentRun, StepRule, StopRule};
use crate::error::{Error, Result};
use crate::lqr::dare_solve;
use crate::lyapunov::lyap;
use crate::numerics::{cholesky, inverse, rank, solve_linear, spectral_norm, spectral_radius, sym_lambda_max, sym_lambda_min, tol};
use crate::policy::{is_schur, is_stabilizing_dynamic, DynamicPolicy, MetricChoice, Plant, PolicyTangent};
use crate::trace::IterTrace;
use crate::Mat;

/// Relative eigenvalue floor below which a Gramian counts as singular.
const GRAMIAN_FLOOR: f64 = 1e-12;

/// Augmented closed loop of plant and controller.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    /// `[[A, B C_K], [B_K C, A_K]]`
    pub acl: Mat,
    /// `blockdiag(I_n, B_K)`, the map from `(w, v)` into the augmented state.
    pub bcl: Mat,
    /// `blockdiag(C, C_K)`
    pub ccl: Mat,
}

/// Assemble the closed loop. Panics if the controller does not fit the
/// plant; use [`DynamicPolicy::check_plant`] first when shapes are untrusted.
pub fn closed_loop(plant: &Plant, kd: &DynamicPolicy) -> ClosedLoop {
    let acl = Mat::from_blocks(
        plant.a(),
        &(plant.b() * kd.c_k()),
        &(kd.b_k() * plant.c()),
        kd.a_k(),
    );
    ClosedLoop {
        acl,
        bcl: Mat::block_diag(&Mat::identity(plant.n()), kd.b_k()),
        ccl: Mat::block_diag(plant.c(), kd.c_k()),
    }
}

#[derive(Clone, Debug)]
pub struct LqgEval {
    /// `tr(blockdiag(Q, C_Kᵀ R C_K) X)`
    pub j: f64,
    /// `tr(blockdiag(W, B_K V B_Kᵀ) Y)`
    pub j_dual: f64,
    /// `L(A_cl, blockdiag(W, B_K V B_Kᵀ))`
    pub x: Mat,
    /// `L(A_clᵀ, blockdiag(Q, C_Kᵀ R C_K))`
    pub y: Mat,
    pub acl: Mat,
}

fn require_stabilizing(plant: &Plant, kd: &DynamicPolicy) -> Result<()> {
    kd.check_plant(plant)?;
    if !is_stabilizing_dynamic(plant, kd) {
        return Err(Error::Infeasible("controller does not stabilize the plant".into()));
    }
    Ok(())
}

pub fn lqg_eval(plant: &Plant, kd: &DynamicPolicy) -> Result<LqgEval> {
    require_stabilizing(plant, kd)?;
    let cl = closed_loop(plant, kd);
    let noise = Mat::block_diag(plant.w(), &(&(kd.b_k() * plant.v()) * &kd.b_k().transpose()));
    let weight = Mat::block_diag(plant.q(), &(&(&kd.c_k().transpose() * plant.r()) * kd.c_k()));
    let x = lyap(&cl.acl, &noise)?;
    let y = lyap(&cl.acl.transpose(), &weight)?;
    Ok(LqgEval {
        j: (&weight * &x).trace(),
        j_dual: (&noise * &y).trace(),
        x,
        y,
        acl: cl.acl,
    })
}

/// Cost of an arbitrary controller, `None` when it does not stabilize.
pub fn lqg_cost(plant: &Plant, kd: &DynamicPolicy) -> Option<f64> {
    lqg_eval(plant, kd).ok().map(|e| e.j)
}

fn grad_from_eval(plant: &Plant, kd: &DynamicPolicy, ev: &LqgEval) -> DynamicPolicy {
    let (n, q) = (plant.n(), kd.order());
    // ∂J/∂A_cl = 2 Y A_cl X; each controller block reads its slot of it.
    let z = &(&ev.y * &ev.acl) * &ev.x;
    let z12 = z.block(0, n, n, q);
    let z21 = z.block(n, 0, q, n);
    let z22 = z.block(n, n, q, q);
    let y22 = ev.y.block(n, n, q, q);
    let x22 = ev.x.block(n, n, q, q);
    let d_a = z22.scale(2.0);
    let d_b = (&(&z21 * &plant.c().transpose()) + &(&(&y22 * kd.b_k()) * plant.v())).scale(2.0);
    let d_c = (&(&plant.b().transpose() * &z12) + &(&(plant.r() * kd.c_k()) * &x22)).scale(2.0);
    DynamicPolicy::new(d_a, d_b, d_c).expect("gradient blocks share the controller shapes")
}

/// Euclidean gradient `(∂J/∂A_K, ∂J/∂B_K, ∂J/∂C_K)`.
pub fn lqg_grad(plant: &Plant, kd: &DynamicPolicy) -> Result<PolicyTangent> {
    let ev = lqg_eval(plant, kd)?;
    Ok(grad_from_eval(plant, kd, &ev))
}

/// `(T A_K T⁻¹, T B_K, C_K T⁻¹)`; tangents transform by the same rule.
pub fn similarity_transform(kd: &DynamicPolicy, t: &Mat) -> Result<DynamicPolicy> {
    if t.shape() != (kd.order(), kd.order()) {
        return Err(Error::dim(
            "similarity_transform",
            format!("{0}x{0}", kd.order()),
            format!("{}x{}", t.rows(), t.cols()),
        ));
    }
    let t_inv = inverse(t).map_err(|_| Error::Contract("similarity transform T is singular".into()))?;
    DynamicPolicy::new(&(t * kd.a_k()) * &t_inv, t * kd.b_k(), kd.c_k() * &t_inv)
}

/// Controllable and observable, by singular-value rank of the Kalman
/// matrices with threshold `1e-8·σ_max`.
pub fn is_minimal(kd: &DynamicPolicy) -> bool {
    let q = kd.order();
    let (p, m) = (kd.b_k().cols(), kd.c_k().rows());
    let mut ctrb = Mat::zeros(q, q * p);
    let mut obsv = Mat::zeros(q * m, q);
    let mut ab = kd.b_k().clone();
    let mut ca = kd.c_k().clone();
    for i in 0..q {
        ctrb.set_block(0, i * p, &ab);
        obsv.set_block(i * m, 0, &ca);
        ab = kd.a_k() * &ab;
        ca = &ca * kd.a_k();
    }
    rank(&ctrb, tol::RANK) == q && rank(&obsv, tol::RANK) == q
}

/// The stationary controller `(Λ, 0, 0)` of an open-loop stable plant.
pub fn saddle_policy(plant: &Plant, lambda: &Mat) -> Result<DynamicPolicy> {
    if !is_schur(plant.a()) {
        return Err(Error::Contract("saddle policy needs an open-loop stable plant".into()));
    }
    if !lambda.is_square() || !is_schur(lambda) {
        return Err(Error::Contract("saddle policy needs a Schur stable square Λ".into()));
    }
    let q = lambda.rows();
    DynamicPolicy::new(lambda.clone(), Mat::zeros(q, plant.p()), Mat::zeros(plant.m(), q))
}

/// Full-order LQG optimum in predictor form:
/// `(A + B K − L C, L, K)` with `K` from the control Riccati equation and
/// `L = A P Cᵀ (C P Cᵀ + V)⁻¹` from the filter Riccati equation.
pub fn lqg_optimal_policy(plant: &Plant) -> Result<DynamicPolicy> {
    let (_, k) = dare_solve(plant)?;
    let dual = Plant::builder(plant.a().transpose(), plant.c().transpose())
        .c(Mat::identity(plant.n()))
        .q(plant.w().clone())
        .r(plant.v().clone())
        .build()?;
    let (_, kf) = dare_solve(&dual)?;
    let l = -&kf.k().transpose();
    let k = k.into_inner();
    let a_k = &(plant.a() + &(plant.b() * &k)) - &(&l * plant.c());
    DynamicPolicy::new(a_k, l, k)
}

/// `(W_c, W_o) = (L(A_cl, B_cl B_clᵀ), L(A_clᵀ, C_clᵀ C_cl))`, both required
/// positive definite.
pub fn gramians(plant: &Plant, kd: &DynamicPolicy) -> Result<(Mat, Mat)> {
    require_stabilizing(plant, kd)?;
    let cl = closed_loop(plant, kd);
    let wc = lyap(&cl.acl, &(&cl.bcl * &cl.bcl.transpose()))?;
    let wo = lyap(&cl.acl.transpose(), &(&cl.ccl.transpose() * &cl.ccl))?;
    for (name, g) in [("controllability", &wc), ("observability", &wo)] {
        let lo = sym_lambda_min(g)?;
        let hi = sym_lambda_max(g)?;
        if lo <= GRAMIAN_FLOOR * hi {
            return Err(Error::GramianSingular(format!(
                "closed-loop {name} Gramian has eigenvalue {lo:e} (largest {hi:e})"
            )));
        }
    }
    Ok((wc, wo))
}

/// KM metric evaluated with precomputed Gramians.
struct KmForm<'a> {
    plant: &'a Plant,
    wc: Mat,
    wo: Mat,
    w: (f64, f64, f64),
}

impl KmForm<'_> {
    fn new<'a>(plant: &'a Plant, kd: &DynamicPolicy, metric: MetricChoice) -> Result<KmForm<'a>> {
        metric.validate()?;
        let MetricChoice::Km { w1, w2, w3 } = metric else {
            return Err(Error::Contract("KM form needs KM weights".into()));
        };
        let (wc, wo) = gramians(plant, kd)?;
        Ok(KmForm { plant, wc, wo, w: (w1, w2, w3) })
    }

    /// `[[0, B G], [F C, E]]`
    fn embed(&self, v: &PolicyTangent) -> Mat {
        Mat::from_blocks(
            &Mat::zeros(self.plant.n(), self.plant.n()),
            &(self.plant.b() * v.c_k()),
            &(v.b_k() * self.plant.c()),
            v.a_k(),
        )
    }

    fn inner(&self, v1: &PolicyTangent, v2: &PolicyTangent) -> f64 {
        let n = self.plant.n();
        let q = v1.order();
        let (w1, w2, w3) = self.w;
        let e1 = self.embed(v1);
        let e2 = self.embed(v2);
        let t1 = (&(&(&self.wo * &e1) * &self.wc) * &e2.transpose()).trace();
        let wo22 = self.wo.block(n, n, q, q);
        let wc22 = self.wc.block(n, n, q, q);
        let t2 = (&(&v1.b_k().transpose() * &wo22) * v2.b_k()).trace();
        let t3 = (&(v1.c_k() * &wc22) * &v2.c_k().transpose()).trace();
        w1 * t1 + w2 * t2 + w3 * t3
    }
}

/// `⟨V₁, V₂⟩_K^KM = w₁ tr(W_o 𝐄(V₁) W_c 𝐄(V₂)ᵀ) + w₂ tr(𝐅(V₁)ᵀ W_o 𝐅(V₂)) + w₃ tr(𝐆(V₁) W_c 𝐆(V₂)ᵀ)`
/// where the tangent `V = (E, F, G)` embeds as `𝐄 = [[0, BG], [FC, E]]`,
/// `𝐅 = blockdiag(0, F)`, `𝐆 = blockdiag(0, G)`.
pub fn km_inner(
    plant: &Plant,
    kd: &DynamicPolicy,
    v1: &PolicyTangent,
    v2: &PolicyTangent,
    metric: MetricChoice,
) -> Result<f64> {
    let form = KmForm::new(plant, kd, metric)?;
    for v in [v1, v2] {
        if v.a_k().shape() != kd.a_k().shape() || v.b_k().shape() != kd.b_k().shape() || v.c_k().shape() != kd.c_k().shape() {
            return Err(Error::dim("km_inner", "tangent shaped like the controller", "mismatched tangent"));
        }
    }
    Ok(form.inner(v1, v2))
}

fn km_grad_with(form: &KmForm<'_>, kd: &DynamicPolicy, egrad: &PolicyTangent) -> Result<PolicyTangent> {
    let d = kd.dim();
    let zero = kd.scale(0.0);
    let unit = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        zero.from_flat_like(&v)
    };
    let basis: Vec<PolicyTangent> = (0..d).map(unit).collect::<Result<_>>()?;
    let mut gram = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let g = form.inner(&basis[i], &basis[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let rhs = Mat::column(&egrad.to_flat());
    let c = solve_linear(&gram, &rhs).map_err(|e| match e {
        Error::Singular { pivot, .. } => Error::MinimalityLost(format!("KM Gram matrix is singular (pivot {pivot:e})")),
        other => other,
    })?;
    zero.from_flat_like(c.as_slice())
}

/// Riemannian gradient under the KM metric: the tangent `g` with
/// `⟨g, W⟩_KM = ⟨∇̄J, W⟩_F` for every tangent `W`.
///
/// The Gram solve runs in the realization whose controller block of `W_c`
/// is the identity and the result is mapped back. The metric is similarity
/// invariant, so only the conditioning changes.
pub fn km_grad(plant: &Plant, kd: &DynamicPolicy, metric: MetricChoice) -> Result<PolicyTangent> {
    metric.validate()?;
    let (wc, _) = gramians(plant, kd)?;
    let (n, q) = (plant.n(), kd.order());
    let l = cholesky(&wc.block(n, n, q, q))
        .map_err(|_| Error::GramianSingular("controller block of W_c is not positive definite".into()))?;
    let white = similarity_transform(kd, &inverse(&l)?)?;
    let form = KmForm::new(plant, &white, metric)?;
    let egrad = lqg_grad(plant, &white)?;
    similarity_transform(&km_grad_with(&form, &white, &egrad)?, &l)
}

/// Second difference `(J(K + hD) − 2J(K) + J(K − hD)) / h²`.
pub fn directional_curvature(plant: &Plant, kd: &DynamicPolicy, dir: &PolicyTangent, h: f64) -> Result<f64> {
    let j0 = lqg_eval(plant, kd)?.j;
    let jp = lqg_eval(plant, &kd.axpy(h, dir))?.j;
    let jm = lqg_eval(plant, &kd.axpy(-h, dir))?.j;
    Ok((jp - 2.0 * j0 + jm) / (h * h))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LqgMode {
    Euclidean,
    KmRiemannian { w1: f64, w2: f64, w3: f64 },
}

impl LqgMode {
    pub const KM_DEFAULT: LqgMode = LqgMode::KmRiemannian {
        w1: 1.0,
        w2: 1.0,
        w3: 1.0,
    };
}

#[derive(Clone, Debug)]
pub struct LqgRun {
    pub descent: DescentRun<DynamicPolicy>,
    /// Minimality of the final controller; a minimal stationary point is
    /// globally optimal.
    pub minimal: bool,
}

/// Default fixed step for dynamic descent, `1e-3 / ‖R‖₂`.
pub fn default_lqg_step(plant: &Plant) -> f64 {
    1e-3 / spectral_norm(plant.r())
}

/// Gradient descent over full-order controllers. There is no closed-form
/// certificate for dynamic policies, so each step is verified: the step is
/// halved until the candidate stabilizes and does not increase `J`.
///
/// In KM mode `grad_norm` is the KM norm of the Riemannian gradient, which
/// is invariant along similarity orbits.
pub fn lqg_gd_run(
    plant: &Plant,
    kd0: &DynamicPolicy,
    mode: LqgMode,
    step_rule: StepRule,
    stop: StopRule,
) -> Result<LqgRun> {
    if kd0.order() != plant.n() {
        return Err(Error::Contract(format!(
            "descent runs over full-order controllers (q = n = {}), got q = {}",
            plant.n(),
            kd0.order()
        )));
    }
    require_stabilizing(plant, kd0)?;
    let eta0 = match step_rule {
        StepRule::Fixed { eta } => eta.unwrap_or_else(|| default_lqg_step(plant)),
        StepRule::Certificate { cap } => cap,
    };
    let mut kd = kd0.clone();
    let mut trace = Vec::new();
    for iter in 0.. {
        let ev = lqg_eval(plant, &kd)?;
        let rho = spectral_radius(&ev.acl)?;
        let egrad = grad_from_eval(plant, &kd, &ev);
        let (dir, grad_norm) = match mode {
            LqgMode::Euclidean => (egrad.scale(-1.0), egrad.frobenius_norm()),
            LqgMode::KmRiemannian { w1, w2, w3 } => {
                let g = km_grad(plant, &kd, MetricChoice::Km { w1, w2, w3 }).map_err(|e| match e {
                    Error::GramianSingular(msg) => Error::MinimalityLost(msg),
                    other => other,
                })?;
                let norm = g.dot(&egrad).max(0.0).sqrt();
                (g.scale(-1.0), norm)
            }
        };
        let mut record = IterTrace {
            iter,
            j: ev.j,
            grad_norm,
            step: 0.0,
            rho,
        };
        if grad_norm <= stop.tol || iter >= stop.max_iter {
            trace.push(record);
            let minimal = is_minimal(&kd);
            return Ok(LqgRun {
                descent: DescentRun {
                    trace,
                    policy: kd,
                    converged: grad_norm <= stop.tol,
                },
                minimal,
            });
        }
        let accepted = backtrack(eta0, ev.j, |eta| {
            let cand = kd.axpy(eta, &dir);
            lqg_cost(plant, &cand).map(|j| (cand, j))
        });
        let Some((next, _, eta)) = accepted else {
            trace.push(record);
            return Err(Error::Stalled {
                iterations: iter,
                reason: "no stabilizing non-increasing step after backtracking".into(),
                trace,
            });
        };
        record.step = eta;
        trace.push(record);
        kd = next;
    }
    unreachable!("descent loop exits through max_iter")
}
