//! Task runners: each turns a resolved experiment into a trace, summary
//! fields and optional grid.

use std::fmt::Write as _;

use polgeo::descent::{DescentRun, StepRule};
use polgeo::hinf::{hinf_cost, hinf_descent_run, hinf_grad, hinf_value, SamplingConfig};
use polgeo::lqg::{is_minimal, lqg_cost, lqg_gd_run, saddle_policy, LqgMode};
use polgeo::lqr::{dare_solve, gd_run, hewer_step, lqr_cost, lqr_eval, lqr_grad_riemannian};
use polgeo::numerics::spectral_radius;
use polgeo::policy::{
    connectivity_scan, is_stabilizing_dynamic, landscape_slice, ConstraintSubspace, DynamicPolicy, MetricChoice, Plant,
    PolicyVector, StaticGain,
};
use polgeo::structured::structured_gd_run;
use polgeo::trace::IterTrace;
use polgeo::zeroth::{zo_lqr_run, ZoConfig, RNG_NAME};
use polgeo::{Error, Mat};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{
    object, ControllerSpec, Experiment, Family, LandscapeCost, MatrixSpec, PolicySpec, StartController,
    StopSpec, StructuredMetric, TaskConfig,
};

/// Failure class of a run; each maps to one process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Config,
    InfeasibleStart,
    Stalled,
    Internal,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Config => 2,
            FailureKind::InfeasibleStart => 3,
            FailureKind::Stalled => 4,
            FailureKind::Internal => 5,
        }
    }

    pub fn of(e: &Error) -> Self {
        match e {
            Error::Dimension { .. } | Error::Contract(_) | Error::Refused(_) => FailureKind::Config,
            Error::Infeasible(_) | Error::NotSchurStable { .. } | Error::StabilizabilitySuspect { .. } => {
                FailureKind::InfeasibleStart
            }
            Error::Stalled { .. } | Error::MinimalityLost(_) | Error::TooCloseToBoundary { .. } => FailureKind::Stalled,
            Error::Internal(_) | Error::Singular { .. } | Error::NonFinite { .. } | Error::GramianSingular(_) => {
                FailureKind::Internal
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    /// Records logged before the failure.
    pub trace: Vec<IterTrace>,
}

impl Failure {
    fn infeasible(message: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::InfeasibleStart,
            message: message.into(),
            trace: Vec::new(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let kind = FailureKind::of(&e);
        let trace = match e {
            Error::Stalled { trace, .. } => trace,
            _ => Vec::new(),
        };
        Failure { kind, message, trace }
    }
}

/// Everything a successful run reports.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub trace: Vec<IterTrace>,
    /// Task-specific summary fields (`J`, `grad_norm`, `policy`, ...).
    pub fields: Map<String, Value>,
    /// CSV written to `grid.csv`.
    pub grid: Option<String>,
    /// Human-readable lines for stdout.
    pub report: Vec<String>,
}

pub fn gain_json(k: &Mat) -> Value {
    serde_json::to_value(MatrixSpec::from_mat(k)).expect("matrix serializes")
}

pub fn controller_json(kd: &DynamicPolicy) -> Value {
    serde_json::to_value(ControllerSpec::from_policy(kd)).expect("controller serializes")
}

fn descent_fields<P>(run: &DescentRun<P>, policy: Value) -> Map<String, Value> {
    let last = run.final_record();
    object([
        ("J", json!(last.j)),
        ("grad_norm", json!(last.grad_norm)),
        ("iterations", json!(last.iter)),
        ("converged", json!(run.converged)),
        ("policy", policy),
    ])
}

fn descent_report(fields: &Map<String, Value>) -> Vec<String> {
    vec![format!(
        "J = {}  grad_norm = {}  iterations = {}  converged = {}",
        fields["J"], fields["grad_norm"], fields["iterations"], fields["converged"]
    )]
}

fn start_gain(plant: &Plant, spec: &Option<MatrixSpec>) -> Result<StaticGain, Failure> {
    let k = spec.as_ref().expect("resolved").to_mat().expect("validated");
    let rho = spectral_radius(&(plant.a() + &(plant.b() * &k))).unwrap_or(f64::NAN);
    StaticGain::certify(plant, k)
        .map_err(|_| Failure::infeasible(format!("start gain is not stabilizing (closed-loop spectral radius {rho})")))
}

fn start_controller(plant: &Plant, spec: &Option<StartController>) -> Result<DynamicPolicy, Failure> {
    let kd = match spec.as_ref().expect("resolved") {
        StartController::Explicit(c) => c.to_policy().expect("validated"),
        StartController::Saddle { saddle } => saddle_policy(plant, &saddle.to_mat().expect("validated"))?,
    };
    if !is_stabilizing_dynamic(plant, &kd) {
        return Err(Failure::infeasible("start controller is not stabilizing"));
    }
    Ok(kd)
}

fn lqr_gd(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::LqrGd {
        k0,
        direction,
        step,
        stop,
    } = task
    else {
        unreachable!()
    };
    let k0 = start_gain(plant, k0)?;
    let run = gd_run(plant, &k0, direction.expect("resolved"), step.expect("resolved"), stop.rule())?;
    let fields = descent_fields(&run, gain_json(run.policy.k()));
    Ok(Outcome {
        report: descent_report(&fields),
        trace: run.trace,
        fields,
        grid: None,
    })
}

fn hewer(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::Hewer { k0, iterations, tol } = task else {
        unreachable!()
    };
    let (iterations, tol) = (iterations.expect("resolved"), tol.expect("resolved"));
    let mut k = start_gain(plant, k0)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..=iterations {
        let ev = lqr_eval(plant, &k)?;
        let record = IterTrace {
            iter,
            j: ev.j,
            grad_norm: lqr_grad_riemannian(plant, &k)?.frobenius_norm(),
            step: 0.0,
            rho: spectral_radius(&ev.a_cl)?,
        };
        if converged || iter == iterations {
            trace.push(record);
            break;
        }
        let next = hewer_step(plant, &k)?;
        converged = (next.k() - k.k()).max_abs() <= tol;
        trace.push(IterTrace { step: 1.0, ..record });
        k = next;
    }
    let last = trace.last().expect("at least one record");
    let mut fields = object([
        ("J", json!(last.j)),
        ("grad_norm", json!(last.grad_norm)),
        ("iterations", json!(last.iter)),
        ("converged", json!(converged)),
        ("policy", gain_json(k.k())),
    ]);
    if let Ok((_, kstar)) = dare_solve(plant) {
        fields.insert("dare_gap".into(), json!((k.k() - kstar.k()).max_abs()));
    }
    Ok(Outcome {
        report: descent_report(&fields),
        trace,
        fields,
        grid: None,
    })
}

fn structured_gd(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::StructuredGd {
        k0,
        mask,
        c_out,
        metric,
        step,
        stop,
    } = task
    else {
        unreachable!()
    };
    let sub = match (mask, c_out) {
        (Some(mask), _) => ConstraintSubspace::sparsity(mask.clone())?,
        (None, Some(c)) => ConstraintSubspace::output_feedback(c.to_mat().expect("validated"), plant.m())?,
        (None, None) => unreachable!("validated"),
    };
    let metric = match metric.expect("resolved") {
        StructuredMetric::Frobenius => MetricChoice::Frobenius,
        StructuredMetric::Lyapunov => MetricChoice::Lyapunov,
    };
    let k0 = start_gain(plant, k0)?;
    let run = structured_gd_run(plant, &k0, &sub, metric, step.expect("resolved"), stop.rule())?;
    let fields = descent_fields(&run, gain_json(run.policy.k()));
    Ok(Outcome {
        report: descent_report(&fields),
        trace: run.trace,
        fields,
        grid: None,
    })
}

fn lqg(plant: &Plant, kd0: &Option<StartController>, mode: LqgMode, step: StepRule, stop: StopSpec) -> Result<Outcome, Failure> {
    let kd0 = start_controller(plant, kd0)?;
    if matches!(mode, LqgMode::KmRiemannian { .. }) && !is_minimal(&kd0) {
        return Err(Failure::infeasible("the KM metric needs a minimal start controller"));
    }
    let run = lqg_gd_run(plant, &kd0, mode, step, stop.rule())?;
    let mut fields = descent_fields(&run.descent, controller_json(&run.descent.policy));
    fields.insert("minimal".into(), json!(run.minimal));
    Ok(Outcome {
        report: descent_report(&fields),
        trace: run.descent.trace,
        fields,
        grid: None,
    })
}

fn hinf_eval(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::HinfEval { k, grid, refine_tol } = task else {
        unreachable!()
    };
    let k = start_gain(plant, k)?;
    let (ev, g) = hinf_grad(plant, &k, grid.expect("resolved"), refine_tol.expect("resolved"))?;
    let record = IterTrace {
        iter: 0,
        j: ev.j,
        grad_norm: g.frobenius_norm(),
        step: 0.0,
        rho: spectral_radius(&k.closed_loop(plant))?,
    };
    let fields = object([
        ("J", json!(ev.j)),
        ("grad_norm", json!(record.grad_norm)),
        ("omega_star", json!(ev.omega_star)),
        ("grid", json!(ev.grid_size)),
        ("refined", json!(ev.refined)),
        ("policy", gain_json(k.k())),
    ]);
    Ok(Outcome {
        report: vec![format!(
            "J = {}  omega* = {}  grid = {}  refined = {}",
            ev.j, ev.omega_star, ev.grid_size, ev.refined
        )],
        trace: vec![record],
        fields,
        grid: None,
    })
}

fn hinf_descent(plant: &Plant, task: &TaskConfig, seed: u64) -> Result<Outcome, Failure> {
    let TaskConfig::HinfDescent {
        k0,
        grid,
        refine_tol,
        samples,
        radius,
        min_radius_ratio,
        step,
        stop,
    } = task
    else {
        unreachable!()
    };
    let cfg = SamplingConfig {
        sample_count: *samples,
        sample_radius: *radius,
        min_radius_ratio: min_radius_ratio.expect("resolved"),
        grid: grid.expect("resolved"),
        refine_tol: refine_tol.expect("resolved"),
        seed,
    };
    let k0 = start_gain(plant, k0)?;
    let run = hinf_descent_run(plant, &k0, cfg, step.expect("resolved"), stop.rule())?;
    let mut fields = descent_fields(&run, gain_json(run.policy.k()));
    let ev = hinf_cost(plant, &run.policy, cfg.grid, cfg.refine_tol)?;
    fields.insert("omega_star".into(), json!(ev.omega_star));
    Ok(Outcome {
        report: descent_report(&fields),
        trace: run.trace,
        fields,
        grid: None,
    })
}

fn zo_gd(plant: &Plant, task: &TaskConfig, seed: u64) -> Result<Outcome, Failure> {
    let TaskConfig::ZoGd {
        k0,
        estimator,
        epsilon,
        samples,
        step,
        stop,
    } = task
    else {
        unreachable!()
    };
    let cfg = ZoConfig {
        epsilon: *epsilon,
        samples: *samples,
        seed,
        estimator: estimator.expect("resolved"),
    };
    let k0 = start_gain(plant, k0)?;
    let run = zo_lqr_run(plant, &k0, &cfg, step.expect("resolved"), stop.rule())?;
    let mut fields = descent_fields(&run, gain_json(run.policy.k()));
    fields.insert("rng".into(), json!(RNG_NAME));
    Ok(Outcome {
        report: descent_report(&fields),
        trace: run.trace,
        fields,
        grid: None,
    })
}

fn flat(spec: &PolicySpec) -> Vec<f64> {
    match spec {
        PolicySpec::Gain(g) => g.to_mat().expect("validated").to_flat(),
        PolicySpec::Controller(c) => c.to_policy().expect("validated").to_flat(),
    }
}

fn landscape(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::Landscape {
        cost,
        origin,
        dir1,
        dir2,
        s_range,
        t_range,
        resolution,
    } = task
    else {
        unreachable!()
    };
    let [o, d1, d2] = [origin, dir1, dir2].map(|p| flat(p.as_ref().expect("resolved")));
    let (s, t) = (s_range.expect("resolved"), t_range.expect("resolved"));
    let res = resolution.expect("resolved");
    let (m, n) = (plant.m(), plant.n());
    let as_gain = |x: &Vec<f64>| Mat::from_vec(m, n, x.clone()).expect("sized by validation");
    let shape = DynamicPolicy::zeros(n, plant.p(), m);
    let as_controller = |x: &Vec<f64>| shape.from_flat_like(x).expect("sized by validation");
    let grid = match cost.expect("resolved") {
        LandscapeCost::Lqr => landscape_slice(|x: &Mat| lqr_cost(plant, x), &as_gain(&o), &as_gain(&d1), &as_gain(&d2), (s[0], s[1]), (t[0], t[1]), res)?,
        LandscapeCost::Hinf => landscape_slice(|x: &Mat| hinf_value(plant, x), &as_gain(&o), &as_gain(&d1), &as_gain(&d2), (s[0], s[1]), (t[0], t[1]), res)?,
        LandscapeCost::Lqg => landscape_slice(
            |x: &DynamicPolicy| lqg_cost(plant, x),
            &as_controller(&o),
            &as_controller(&d1),
            &as_controller(&d2),
            (s[0], s[1]),
            (t[0], t[1]),
            res,
        )?,
    };
    let feasible = grid.values.iter().filter(|v| v.is_some()).count();
    let mut fields = object([
        ("feasible_cells", json!(feasible)),
        ("total_cells", json!(grid.values.len())),
    ]);
    let mut report = vec![format!("{feasible} of {} grid points feasible", grid.values.len())];
    if let Some((s, t, v)) = grid.min_feasible() {
        fields.insert("J".into(), json!(v));
        fields.insert("argmin".into(), json!({ "s": s, "t": t }));
        report.push(format!("minimum J = {v} at s = {s}, t = {t}"));
    }
    Ok(Outcome {
        trace: Vec::new(),
        fields,
        grid: Some(grid.to_csv()),
        report,
    })
}

fn connectivity(plant: &Plant, task: &TaskConfig) -> Result<Outcome, Failure> {
    let TaskConfig::Connectivity {
        family,
        bounds,
        resolution,
    } = task
    else {
        unreachable!()
    };
    let bounds: Vec<(f64, f64)> = bounds.as_ref().expect("resolved").iter().map(|b| (b[0], b[1])).collect();
    let res = resolution.expect("resolved");
    let (m, n) = (plant.m(), plant.n());
    let shape = DynamicPolicy::zeros(n, plant.p(), m);
    let family = family.expect("resolved");
    let member = |x: &[f64]| match family {
        Family::Static => polgeo::policy::is_stabilizing_static(plant, &Mat::from_vec(m, n, x.to_vec()).expect("sized")),
        Family::Dynamic => is_stabilizing_dynamic(plant, &shape.from_flat_like(x).expect("sized")),
    };
    let report = connectivity_scan(member, &bounds, res)?;

    let dim = bounds.len();
    let mut csv = String::new();
    for i in 0..dim {
        write!(csv, "x{i},").expect("writing to a String cannot fail");
    }
    csv.push_str("stable\n");
    let mut point = vec![0.0; dim];
    for idx in 0..res.pow(dim as u32) {
        let mut rest = idx;
        for axis in (0..dim).rev() {
            let i = rest % res;
            rest /= res;
            let (lo, hi) = bounds[axis];
            point[axis] = lo + (hi - lo) * i as f64 / (res - 1) as f64;
        }
        for x in &point {
            write!(csv, "{x},").expect("writing to a String cannot fail");
        }
        csv.push_str(if member(&point) { "1\n" } else { "0\n" });
    }

    let fields = object([
        ("components", json!(report.components)),
        ("component_sizes", json!(report.component_sizes)),
        ("feasible_cells", json!(report.feasible_cells)),
        ("total_cells", json!(report.total_cells)),
    ]);
    Ok(Outcome {
        trace: Vec::new(),
        fields,
        grid: Some(csv),
        report: vec![format!(
            "{} components, {} of {} cells feasible",
            report.components, report.feasible_cells, report.total_cells
        )],
    })
}

fn dare(plant: &Plant) -> Result<Outcome, Failure> {
    let (p, k) = dare_solve(plant)?;
    let ev = lqr_eval(plant, &k)?;
    let record = IterTrace {
        iter: 0,
        j: ev.j,
        grad_norm: lqr_grad_riemannian(plant, &k)?.frobenius_norm(),
        step: 0.0,
        rho: spectral_radius(&ev.a_cl)?,
    };
    let fields = object([
        ("J", json!(ev.j)),
        ("grad_norm", json!(record.grad_norm)),
        ("policy", gain_json(k.k())),
        ("P", gain_json(&p)),
    ]);
    Ok(Outcome {
        report: vec![format!("J* = {}  K* = {}", ev.j, fields["policy"])],
        trace: vec![record],
        fields,
        grid: None,
    })
}

/// Run the configured task.
pub fn run_experiment(exp: &Experiment) -> Result<Outcome, Failure> {
    let plant = &exp.plant;
    let seed = exp.config.seed();
    let task = &exp.config.task;
    match task {
        TaskConfig::LqrGd { .. } => lqr_gd(plant, task),
        TaskConfig::Hewer { .. } => hewer(plant, task),
        TaskConfig::StructuredGd { .. } => structured_gd(plant, task),
        TaskConfig::LqgGd { kd0, step, stop } => lqg(plant, kd0, LqgMode::Euclidean, step.expect("resolved"), *stop),
        TaskConfig::LqgRgd {
            kd0,
            weights,
            step,
            stop,
        } => {
            let w = weights.expect("resolved");
            let mode = LqgMode::KmRiemannian {
                w1: w.w1,
                w2: w.w2,
                w3: w.w3,
            };
            lqg(plant, kd0, mode, step.expect("resolved"), *stop)
        }
        TaskConfig::HinfEval { .. } => hinf_eval(plant, task),
        TaskConfig::HinfDescent { .. } => hinf_descent(plant, task, seed),
        TaskConfig::ZoGd { .. } => zo_gd(plant, task, seed),
        TaskConfig::Landscape { .. } => landscape(plant, task),
        TaskConfig::Connectivity { .. } => connectivity(plant, task),
        TaskConfig::Dare {} => dare(plant),
    }
}
