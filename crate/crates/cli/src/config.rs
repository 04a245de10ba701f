//! Experiment configuration: JSON ingestion, validation with field paths and
//! default resolution.
//!
//! [`parse_config`] returns a *resolved* config in which every default has
//! been written out explicitly, so the echo in `summary.json` re-parses to
//! the same value.

use std::fmt;
use std::path::Path;

use polgeo::descent::{StepRule, StopRule};
use polgeo::hinf::{DEFAULT_GRID, DEFAULT_REFINE_TOL, MIN_GRID};
use polgeo::lqr::Direction;
use polgeo::numerics::{spectral_norm, spectral_radius};
use polgeo::policy::{DynamicPolicy, Plant, PolicyVector, MAX_SCAN_DIM, MIN_SCAN_RESOLUTION};
use polgeo::zeroth::Estimator;
use polgeo::Mat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Every default the front end can fill in. Plant-dependent defaults are
/// given as their rule; the resolved value lands in the config echo.
pub mod defaults {
    pub const SEED: u64 = 0;
    pub const TOL: f64 = 1e-8;
    pub const MAX_ITER: usize = 10_000;
    pub const CERTIFICATE_CAP: f64 = 1.0;
    pub const HEWER_ITERATIONS: usize = 50;
    pub const HEWER_TOL: f64 = 1e-12;
    pub const KM_WEIGHTS: [f64; 3] = [1.0, 1.0, 1.0];
    pub const MIN_RADIUS_RATIO: f64 = 1e-8;
    pub const ZO_STEP: f64 = 1e-3;
    pub const LANDSCAPE_RANGE: [f64; 2] = [-3.0, 3.0];
    pub const LANDSCAPE_RESOLUTION: usize = 101;
    pub const CONNECTIVITY_BOUND: [f64; 2] = [-3.0, 3.0];
    pub const CONNECTIVITY_RESOLUTION: usize = 61;
}

/// The defaults table echoed into `summary.json`.
pub fn defaults_table() -> Value {
    use defaults::*;
    json!({
        "seed": SEED,
        "plant.C": "identity (full state output)",
        "plant.Sigma": "identity",
        "plant.W": "identity",
        "plant.V": "identity",
        "task.stop.tol": TOL,
        "task.stop.max_iter": MAX_ITER,
        "task.step": { "kind": "certificate", "cap": CERTIFICATE_CAP },
        "task.step.fixed.eta": "1e-3 / ‖R‖₂ (zo_gd: 1e-3)",
        "task.k0": "zero gain when A is Schur stable",
        "task.kd0": "zero controller of order n when A is Schur stable (lqg_gd only)",
        "task.direction": "euclidean",
        "task.metric": "lyapunov",
        "task.weights": { "w1": KM_WEIGHTS[0], "w2": KM_WEIGHTS[1], "w3": KM_WEIGHTS[2] },
        "task.iterations": HEWER_ITERATIONS,
        "task.tol": HEWER_TOL,
        "task.grid": DEFAULT_GRID,
        "task.refine_tol": DEFAULT_REFINE_TOL,
        "task.samples": "hinf_descent: 2·mn + 2; zo_gd: 2·mn",
        "task.radius": "1e-4 · (1 + ‖K0‖_F)",
        "task.min_radius_ratio": MIN_RADIUS_RATIO,
        "task.estimator": "two_point",
        "task.epsilon": "1e-3 · (1 + ‖K0‖_F)",
        "task.zo_step": { "kind": "fixed", "eta": ZO_STEP },
        "task.cost": "lqr",
        "task.origin": "zero policy",
        "task.dir1": "first coordinate direction",
        "task.dir2": "second coordinate direction",
        "task.s_range": LANDSCAPE_RANGE,
        "task.t_range": LANDSCAPE_RANGE,
        "task.resolution": { "landscape": LANDSCAPE_RESOLUTION, "connectivity": CONNECTIVITY_RESOLUTION },
        "task.family": "dynamic",
        "task.bounds": CONNECTIVITY_BOUND,
    })
}

/// A matrix as a bare number (1×1), nested rows, or explicit dims with
/// row-major data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
    Dims { rows: usize, cols: usize, data: Vec<f64> },
}

impl MatrixSpec {
    pub fn from_mat(m: &Mat) -> Self {
        MatrixSpec::Rows((0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect())
    }

    pub fn to_mat(&self) -> Result<Mat, String> {
        match self {
            MatrixSpec::Scalar(x) => Ok(Mat::scalar(*x)),
            MatrixSpec::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if cols == 0 {
                    return Err("matrix must be non-empty".into());
                }
                if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
                    return Err(format!("row {i} has {} entries, expected {cols}", r.len()));
                }
                Mat::from_rows(rows).map_err(|e| e.to_string())
            }
            MatrixSpec::Dims { rows, cols, data } => {
                if *rows == 0 || *cols == 0 {
                    return Err("matrix must be non-empty".into());
                }
                if data.len() != rows * cols {
                    return Err(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len()));
                }
                Mat::from_vec(*rows, *cols, data.clone()).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixSpec>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixSpec>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixSpec>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixSpec>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixSpec>,
    #[serde(rename = "Sigma", default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<MatrixSpec>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<MatrixSpec>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<MatrixSpec>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl StopSpec {
    pub fn rule(&self) -> StopRule {
        StopRule {
            tol: self.tol.unwrap_or(defaults::TOL),
            max_iter: self.max_iter.unwrap_or(defaults::MAX_ITER),
        }
    }
}

/// Full-order controller `(A_K, B_K, C_K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(rename = "A_K")]
    pub a_k: MatrixSpec,
    #[serde(rename = "B_K")]
    pub b_k: MatrixSpec,
    #[serde(rename = "C_K")]
    pub c_k: MatrixSpec,
}

impl ControllerSpec {
    pub fn from_policy(kd: &DynamicPolicy) -> Self {
        ControllerSpec {
            a_k: MatrixSpec::from_mat(kd.a_k()),
            b_k: MatrixSpec::from_mat(kd.b_k()),
            c_k: MatrixSpec::from_mat(kd.c_k()),
        }
    }

    pub fn to_policy(&self) -> Result<DynamicPolicy, String> {
        DynamicPolicy::new(self.a_k.to_mat()?, self.b_k.to_mat()?, self.c_k.to_mat()?).map_err(|e| e.to_string())
    }
}

/// Starting controller for the LQG drivers: explicit matrices, or the
/// saddle controller `(Λ, 0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartController {
    Explicit(ControllerSpec),
    Saddle { saddle: MatrixSpec },
}

/// A point or direction of a landscape slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Controller(ControllerSpec),
    Gain(MatrixSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredMetric {
    Frobenius,
    Lyapunov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeCost {
    Lqr,
    Lqg,
    Hinf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Static,
    Dynamic,
}

/// Task and its options. In documents the variant is named by `task.kind`;
/// serde sees the externally tagged form so errors keep their field paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    LqrGd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k0: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Direction>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    Hewer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k0: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        iterations: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    StructuredGd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k0: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<Vec<Vec<bool>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_out: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<StructuredMetric>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    LqgGd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kd0: Option<StartController>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    LqgRgd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kd0: Option<StartController>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<KmWeights>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    HinfEval {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refine_tol: Option<f64>,
    },
    HinfDescent {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k0: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refine_tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_radius_ratio: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    ZoGd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k0: Option<MatrixSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        estimator: Option<Estimator>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<StepRule>,
        #[serde(default)]
        stop: StopSpec,
    },
    Landscape {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cost: Option<LandscapeCost>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<PolicySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir1: Option<PolicySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir2: Option<PolicySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_range: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_range: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<usize>,
    },
    Connectivity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        family: Option<Family>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Vec<[f64; 2]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<usize>,
    },
    Dare {},
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::LqrGd { .. } => "lqr_gd",
            TaskConfig::Hewer { .. } => "hewer",
            TaskConfig::StructuredGd { .. } => "structured_gd",
            TaskConfig::LqgGd { .. } => "lqg_gd",
            TaskConfig::LqgRgd { .. } => "lqg_rgd",
            TaskConfig::HinfEval { .. } => "hinf_eval",
            TaskConfig::HinfDescent { .. } => "hinf_descent",
            TaskConfig::ZoGd { .. } => "zo_gd",
            TaskConfig::Landscape { .. } => "landscape",
            TaskConfig::Connectivity { .. } => "connectivity",
            TaskConfig::Dare {} => "dare",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub task: TaskConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(defaults::SEED)
    }
}

/// One failed requirement, keyed by its path in the config document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("JSON parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// A validated, fully resolved experiment and its plant.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: Plant,
    /// Config paths whose values came from the defaults table.
    pub applied_defaults: Vec<String>,
}

/// Read, validate and resolve a config file. `task` is the task named on
/// the command line; it fills in a missing `task.kind` and must agree with
/// one that is present.
pub fn parse_config(path: &Path, task: Option<&str>) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, task)
}

pub fn parse_config_str(text: &str, task: Option<&str>) -> Result<Experiment, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        // serde_json appends the location, which the variant already carries
        let message = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m).to_string();
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    })?;
    if let (Some(cli), Some(obj)) = (task, doc.as_object_mut()) {
        let entry = obj.entry("task").or_insert_with(|| json!({}));
        if let Some(t) = entry.as_object_mut() {
            match t.get("kind").and_then(Value::as_str) {
                None => {
                    t.insert("kind".into(), Value::String(cli.to_string()));
                }
                Some(k) if k != cli => {
                    return Err(ConfigError::Invalid(vec![Violation::new(
                        "task.kind",
                        format!("config names task `{k}` but the command line asks for `{cli}`"),
                    )]))
                }
                Some(_) => {}
            }
        }
    }
    let kind = tag_outward(&mut doc)?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let mut path = e.path().to_string();
        if let Some(rest) = kind.as_ref().and_then(|k| path.strip_prefix(&format!("task.{k}"))) {
            path = format!("task{rest}");
        }
        let message = e.into_inner().to_string();
        ConfigError::Invalid(vec![Violation::new(if path == "." { "(root)".into() } else { path }, message)])
    })?;
    resolve(config)
}

fn matrix(path: &str, spec: &Option<MatrixSpec>, out: &mut Vec<Violation>) -> Option<Mat> {
    match spec.as_ref()?.to_mat() {
        Ok(m) => Some(m),
        Err(msg) => {
            out.push(Violation::new(path, msg));
            None
        }
    }
}

fn build_plant(spec: &PlantSpec, out: &mut Vec<Violation>) -> Option<Plant> {
    let fields = [
        ("A", &spec.a),
        ("B", &spec.b),
        ("C", &spec.c),
        ("Q", &spec.q),
        ("R", &spec.r),
        ("Sigma", &spec.sigma),
        ("W", &spec.w),
        ("V", &spec.v),
    ];
    let before = out.len();
    for name in ["A", "B", "Q", "R"] {
        if fields.iter().any(|(f, s)| *f == name && s.is_none()) {
            out.push(Violation::new(format!("plant.{name}"), "required"));
        }
    }
    let mats: Vec<Option<Mat>> = fields.iter().map(|(f, s)| matrix(&format!("plant.{f}"), s, out)).collect();
    if out.len() > before {
        return None;
    }
    let [a, b, c, q, r, sigma, w, v]: [Option<Mat>; 8] = mats.try_into().expect("eight plant fields");
    let mut builder = Plant::builder(a?, b?).q(q?).r(r?);
    if let Some(c) = c {
        builder = builder.c(c);
    }
    if let Some(s) = sigma {
        builder = builder.sigma(s);
    }
    if let Some(w) = w {
        builder = builder.w(w);
    }
    if let Some(v) = v {
        builder = builder.v(v);
    }
    let violations = builder.violations();
    if !violations.is_empty() {
        out.extend(violations.into_iter().map(|v| Violation::new(format!("plant.{}", v.field), v.message)));
        return None;
    }
    builder.build().ok()
}

/// Fills defaults and checks task options against the plant.
struct Resolver<'a> {
    plant: &'a Plant,
    violations: Vec<Violation>,
    applied: Vec<String>,
}

impl Resolver<'_> {
    fn bad(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation::new(path, message));
    }

    fn default_used(&mut self, path: &str) {
        self.applied.push(path.to_string());
    }

    fn open_loop_radius(&self) -> f64 {
        spectral_radius(self.plant.a()).unwrap_or(f64::INFINITY)
    }

    /// Gain shaped `m×n`; defaults to zero when `A` is Schur stable.
    fn gain(&mut self, path: &str, spec: &mut Option<MatrixSpec>) -> Option<Mat> {
        let (m, n) = (self.plant.m(), self.plant.n());
        if spec.is_none() {
            let rho = self.open_loop_radius();
            if rho >= 1.0 {
                self.bad(path, format!("required: the zero gain does not stabilize A (spectral radius {rho})"));
                return None;
            }
            *spec = Some(MatrixSpec::from_mat(&Mat::zeros(m, n)));
            self.default_used(path);
        }
        let k = match spec.as_ref()?.to_mat() {
            Ok(k) => k,
            Err(msg) => {
                self.bad(path, msg);
                return None;
            }
        };
        if k.shape() != (m, n) {
            self.bad(path, format!("must be {m}x{n}, got {}x{}", k.rows(), k.cols()));
            return None;
        }
        Some(k)
    }

    fn controller_shape(&mut self, path: &str, kd: &DynamicPolicy) {
        let (n, m, p) = (self.plant.n(), self.plant.m(), self.plant.p());
        if kd.order() != n || kd.b_k().cols() != p || kd.c_k().rows() != m {
            self.bad(
                path,
                format!(
                    "controller must have A_K {n}x{n}, B_K {n}x{p}, C_K {m}x{n}; got order {}, {} outputs, {} inputs",
                    kd.order(),
                    kd.c_k().rows(),
                    kd.b_k().cols()
                ),
            );
        }
    }

    fn start_controller(&mut self, path: &str, spec: &mut Option<StartController>, zero_default: bool) {
        let (n, m, p) = (self.plant.n(), self.plant.m(), self.plant.p());
        if spec.is_none() {
            if !zero_default {
                self.bad(path, "required: the zero controller is not minimal");
                return;
            }
            let rho = self.open_loop_radius();
            if rho >= 1.0 {
                self.bad(path, format!("required: the zero controller does not stabilize A (spectral radius {rho})"));
                return;
            }
            *spec = Some(StartController::Explicit(ControllerSpec::from_policy(&DynamicPolicy::zeros(n, p, m))));
            self.default_used(path);
        }
        match spec.as_ref().expect("filled above") {
            StartController::Explicit(c) => match c.to_policy() {
                Ok(kd) => self.controller_shape(path, &kd),
                Err(msg) => self.bad(path, msg),
            },
            StartController::Saddle { saddle } => match saddle.to_mat() {
                Ok(l) if l.shape() == (n, n) => {}
                Ok(l) => self.bad(&format!("{path}.saddle"), format!("must be {n}x{n}, got {}x{}", l.rows(), l.cols())),
                Err(msg) => self.bad(&format!("{path}.saddle"), msg),
            },
        }
    }

    fn step(&mut self, path: &str, step: &mut Option<StepRule>, fallback: StepRule, fixed_default: f64) {
        let rule = step.get_or_insert_with(|| {
            self.applied.push(path.to_string());
            fallback
        });
        match rule {
            StepRule::Fixed { eta } => {
                let e = *eta.get_or_insert_with(|| {
                    self.applied.push(format!("{path}.eta"));
                    fixed_default
                });
                if !(e > 0.0 && e.is_finite()) {
                    self.bad(&format!("{path}.eta"), format!("must be positive, got {e}"));
                }
            }
            StepRule::Certificate { cap } => {
                if !(*cap > 0.0 && cap.is_finite()) {
                    self.bad(&format!("{path}.cap"), format!("must be positive, got {cap}"));
                }
            }
        }
    }

    fn stop(&mut self, path: &str, stop: &mut StopSpec) {
        if stop.tol.is_none() {
            self.default_used(&format!("{path}.tol"));
        }
        if stop.max_iter.is_none() {
            self.default_used(&format!("{path}.max_iter"));
        }
        let rule = stop.rule();
        *stop = StopSpec {
            tol: Some(rule.tol),
            max_iter: Some(rule.max_iter),
        };
        if !(rule.tol >= 0.0 && rule.tol.is_finite()) {
            self.bad(&format!("{path}.tol"), format!("must be non-negative, got {}", rule.tol));
        }
    }

    fn positive(&mut self, path: &str, value: &mut Option<f64>, fallback: f64) {
        let v = *value.get_or_insert_with(|| {
            self.applied.push(path.to_string());
            fallback
        });
        if !(v > 0.0 && v.is_finite()) {
            self.bad(path, format!("must be positive, got {v}"));
        }
    }

    fn count<T: Copy + PartialOrd + fmt::Display>(&mut self, path: &str, value: &mut Option<T>, fallback: T, min: T) {
        let v = *value.get_or_insert_with(|| {
            self.applied.push(path.to_string());
            fallback
        });
        if v < min {
            self.bad(path, format!("must be at least {min}, got {v}"));
        }
    }

    fn fixed_step(&self) -> f64 {
        1e-3 / spectral_norm(self.plant.r())
    }

    fn policy(&mut self, path: &str, spec: &PolicySpec, dynamic: bool) -> Option<Vec<f64>> {
        let (n, m, p) = (self.plant.n(), self.plant.m(), self.plant.p());
        match (spec, dynamic) {
            (PolicySpec::Gain(g), false) => {
                let mut s = Some(g.clone());
                self.gain(path, &mut s).map(|k| k.to_flat())
            }
            (PolicySpec::Controller(c), true) => match c.to_policy() {
                Ok(kd) => {
                    let before = self.violations.len();
                    self.controller_shape(path, &kd);
                    (self.violations.len() == before).then(|| kd.to_flat())
                }
                Err(msg) => {
                    self.bad(path, msg);
                    None
                }
            },
            (_, true) => {
                self.bad(path, format!("lqg slices need a controller {{A_K {n}x{n}, B_K {n}x{p}, C_K {m}x{n}}}"));
                None
            }
            (_, false) => {
                self.bad(path, format!("static slices need a {m}x{n} gain"));
                None
            }
        }
    }

    fn task(&mut self, task: &mut TaskConfig) {
        let plant = self.plant;
        let (m, n) = (plant.m(), plant.n());
        let certificate = StepRule::Certificate {
            cap: defaults::CERTIFICATE_CAP,
        };
        match task {
            TaskConfig::LqrGd {
                k0,
                direction,
                step,
                stop,
            } => {
                self.gain("task.k0", k0);
                if direction.is_none() {
                    *direction = Some(Direction::Euclidean);
                    self.default_used("task.direction");
                }
                let eta = self.fixed_step();
                self.step("task.step", step, certificate, eta);
                self.stop("task.stop", stop);
            }
            TaskConfig::Hewer { k0, iterations, tol } => {
                self.gain("task.k0", k0);
                self.count("task.iterations", iterations, defaults::HEWER_ITERATIONS, 1);
                let t = *tol.get_or_insert_with(|| {
                    self.applied.push("task.tol".into());
                    defaults::HEWER_TOL
                });
                if !(t >= 0.0 && t.is_finite()) {
                    self.bad("task.tol", format!("must be non-negative, got {t}"));
                }
            }
            TaskConfig::StructuredGd {
                k0,
                mask,
                c_out,
                metric,
                step,
                stop,
            } => {
                match (mask.as_ref(), c_out.as_ref()) {
                    (Some(_), Some(_)) => self.bad("task.mask", "give either mask or c_out, not both"),
                    (None, None) => self.bad("task.mask", "required: one of mask or c_out"),
                    (Some(mk), None) => {
                        if mk.len() != m || mk.iter().any(|r| r.len() != n) {
                            self.bad("task.mask", format!("must be {m}x{n}"));
                        }
                    }
                    (None, Some(c)) => match c.to_mat() {
                        Ok(c) if c.cols() == n => {}
                        Ok(c) => self.bad("task.c_out", format!("must have {n} columns, got {}", c.cols())),
                        Err(msg) => self.bad("task.c_out", msg),
                    },
                }
                if k0.is_none() {
                    *k0 = Some(MatrixSpec::from_mat(&Mat::zeros(m, n)));
                    self.default_used("task.k0");
                }
                self.gain("task.k0", k0);
                if metric.is_none() {
                    *metric = Some(StructuredMetric::Lyapunov);
                    self.default_used("task.metric");
                }
                let eta = self.fixed_step();
                self.step("task.step", step, certificate, eta);
                self.stop("task.stop", stop);
            }
            TaskConfig::LqgGd { kd0, step, stop } => {
                self.start_controller("task.kd0", kd0, true);
                let eta = self.fixed_step();
                self.step("task.step", step, certificate, eta);
                self.stop("task.stop", stop);
            }
            TaskConfig::LqgRgd {
                kd0,
                weights,
                step,
                stop,
            } => {
                self.start_controller("task.kd0", kd0, false);
                let w = *weights.get_or_insert_with(|| {
                    self.applied.push("task.weights".into());
                    let [w1, w2, w3] = defaults::KM_WEIGHTS;
                    KmWeights { w1, w2, w3 }
                });
                if !(w.w1 > 0.0 && w.w2 >= 0.0 && w.w3 >= 0.0) {
                    self.bad("task.weights", format!("need w1 > 0, w2 >= 0, w3 >= 0; got ({}, {}, {})", w.w1, w.w2, w.w3));
                }
                let eta = self.fixed_step();
                self.step("task.step", step, certificate, eta);
                self.stop("task.stop", stop);
            }
            TaskConfig::HinfEval { k, grid, refine_tol } => {
                self.gain("task.k", k);
                self.count("task.grid", grid, DEFAULT_GRID, MIN_GRID);
                self.positive("task.refine_tol", refine_tol, DEFAULT_REFINE_TOL);
            }
            TaskConfig::HinfDescent {
                k0,
                grid,
                refine_tol,
                samples,
                radius,
                min_radius_ratio,
                step,
                stop,
            } => {
                let k = self.gain("task.k0", k0);
                self.count("task.grid", grid, DEFAULT_GRID, MIN_GRID);
                self.positive("task.refine_tol", refine_tol, DEFAULT_REFINE_TOL);
                self.count("task.samples", samples, 2 * m * n + 2, 1);
                let r0 = 1e-4 * (1.0 + k.map_or(0.0, |k| k.frobenius_norm()));
                self.positive("task.radius", radius, r0);
                self.positive("task.min_radius_ratio", min_radius_ratio, defaults::MIN_RADIUS_RATIO);
                let eta = self.fixed_step();
                self.step("task.step", step, certificate, eta);
                self.stop("task.stop", stop);
            }
            TaskConfig::ZoGd {
                k0,
                estimator,
                epsilon,
                samples,
                step,
                stop,
            } => {
                let k = self.gain("task.k0", k0);
                if estimator.is_none() {
                    *estimator = Some(Estimator::TwoPoint);
                    self.default_used("task.estimator");
                }
                let e0 = 1e-3 * (1.0 + k.map_or(0.0, |k| k.frobenius_norm()));
                self.positive("task.epsilon", epsilon, e0);
                self.count("task.samples", samples, 2 * m * n, 1);
                let fixed = StepRule::Fixed {
                    eta: Some(defaults::ZO_STEP),
                };
                self.step("task.step", step, fixed, defaults::ZO_STEP);
                self.stop("task.stop", stop);
            }
            TaskConfig::Landscape {
                cost,
                origin,
                dir1,
                dir2,
                s_range,
                t_range,
                resolution,
            } => {
                let cost = *cost.get_or_insert_with(|| {
                    self.applied.push("task.cost".into());
                    LandscapeCost::Lqr
                });
                let dynamic = cost == LandscapeCost::Lqg;
                let zero = if dynamic {
                    PolicySpec::Controller(ControllerSpec::from_policy(&DynamicPolicy::zeros(n, plant.p(), m)))
                } else {
                    PolicySpec::Gain(MatrixSpec::from_mat(&Mat::zeros(m, n)))
                };
                let dim = if dynamic { DynamicPolicy::zeros(n, plant.p(), m).dim() } else { m * n };
                let unit = |i: usize| -> PolicySpec {
                    let mut e = vec![0.0; dim];
                    if i < dim {
                        e[i] = 1.0;
                    }
                    if dynamic {
                        let kd = DynamicPolicy::zeros(n, plant.p(), m).from_flat_like(&e).expect("sized to dim");
                        PolicySpec::Controller(ControllerSpec::from_policy(&kd))
                    } else {
                        PolicySpec::Gain(MatrixSpec::from_mat(&Mat::from_vec(m, n, e).expect("sized to dim")))
                    }
                };
                if (dir1.is_none() || dir2.is_none()) && dim < 2 {
                    self.bad("task.dir1", format!("a {dim}-parameter policy has no two-dimensional slice"));
                }
                for (path, slot, fallback) in [
                    ("task.origin", &mut *origin, zero),
                    ("task.dir1", &mut *dir1, unit(0)),
                    ("task.dir2", &mut *dir2, unit(1)),
                ] {
                    if slot.is_none() {
                        *slot = Some(fallback);
                        self.applied.push(path.to_string());
                    }
                }
                let o = self.policy("task.origin", origin.as_ref().expect("filled"), dynamic);
                let d1 = self.policy("task.dir1", dir1.as_ref().expect("filled"), dynamic);
                let d2 = self.policy("task.dir2", dir2.as_ref().expect("filled"), dynamic);
                if let (Some(_), Some(d1), Some(d2)) = (o, d1, d2) {
                    let pair = Mat::from_vec(2, d1.len(), d1.iter().chain(&d2).copied().collect()).expect("equal lengths");
                    if polgeo::numerics::rank(&pair, 1e-12) < 2 {
                        self.bad("task.dir2", "must be linearly independent of dir1");
                    }
                }
                for (path, range) in [("task.s_range", s_range), ("task.t_range", t_range)] {
                    let r = *range.get_or_insert_with(|| {
                        self.applied.push(path.to_string());
                        defaults::LANDSCAPE_RANGE
                    });
                    if !(r[0] < r[1]) {
                        self.bad(path, format!("need lo < hi, got [{}, {}]", r[0], r[1]));
                    }
                }
                self.count("task.resolution", resolution, defaults::LANDSCAPE_RESOLUTION, 2);
            }
            TaskConfig::Connectivity {
                family,
                bounds,
                resolution,
            } => {
                let fam = *family.get_or_insert_with(|| {
                    self.applied.push("task.family".into());
                    Family::Dynamic
                });
                let dim = match fam {
                    Family::Static => m * n,
                    Family::Dynamic => DynamicPolicy::zeros(n, plant.p(), m).dim(),
                };
                if dim > MAX_SCAN_DIM {
                    self.bad("task.family", format!("{dim} parameters exceed the scanner limit of {MAX_SCAN_DIM}"));
                }
                let b = bounds.get_or_insert_with(|| {
                    self.applied.push("task.bounds".into());
                    vec![defaults::CONNECTIVITY_BOUND; dim]
                });
                if b.len() == 1 && dim > 1 {
                    *b = vec![b[0]; dim];
                }
                if b.len() != dim {
                    let got = b.len();
                    self.bad("task.bounds", format!("need one [lo, hi] pair per parameter ({dim}), got {got}"));
                }
                for (i, r) in bounds.iter().flatten().enumerate() {
                    if !(r[0] < r[1]) {
                        self.bad(&format!("task.bounds[{i}]"), format!("need lo < hi, got [{}, {}]", r[0], r[1]));
                    }
                }
                self.count("task.resolution", resolution, defaults::CONNECTIVITY_RESOLUTION, MIN_SCAN_RESOLUTION);
            }
            TaskConfig::Dare {} => {}
        }
    }
}

fn identity_default(slot: &mut Option<MatrixSpec>, dim: usize, path: &str, applied: &mut Vec<String>) {
    if slot.is_none() {
        *slot = Some(MatrixSpec::from_mat(&Mat::identity(dim)));
        applied.push(path.to_string());
    }
}

/// Validate against the plant and write every default into the config.
pub fn resolve(mut config: ExperimentConfig) -> Result<Experiment, ConfigError> {
    let mut violations = Vec::new();
    let Some(plant) = build_plant(&config.plant, &mut violations) else {
        return Err(ConfigError::Invalid(violations));
    };
    let mut applied = Vec::new();
    identity_default(&mut config.plant.c, plant.n(), "plant.C", &mut applied);
    identity_default(&mut config.plant.sigma, plant.n(), "plant.Sigma", &mut applied);
    identity_default(&mut config.plant.w, plant.n(), "plant.W", &mut applied);
    identity_default(&mut config.plant.v, plant.p(), "plant.V", &mut applied);
    if config.seed.is_none() {
        config.seed = Some(defaults::SEED);
        applied.push("seed".into());
    }
    let mut resolver = Resolver {
        plant: &plant,
        violations,
        applied,
    };
    resolver.task(&mut config.task);
    if !resolver.violations.is_empty() {
        return Err(ConfigError::Invalid(resolver.violations));
    }
    let applied_defaults = resolver.applied;
    Ok(Experiment {
        config,
        plant,
        applied_defaults,
    })
}

/// Rewrite `task: {kind: k, ...}` as `task: {k: {...}}`; returns `k`.
fn tag_outward(doc: &mut Value) -> Result<Option<String>, ConfigError> {
    let Some(task) = doc.get_mut("task").and_then(Value::as_object_mut) else {
        return Ok(None);
    };
    let kind = match task.remove("kind") {
        Some(Value::String(k)) => k,
        Some(other) => {
            return Err(ConfigError::Invalid(vec![Violation::new(
                "task.kind",
                format!("must be a task name, got {other}"),
            )]))
        }
        None => return Err(ConfigError::Invalid(vec![Violation::new("task.kind", "required")])),
    };
    let body = std::mem::take(task);
    task.insert(kind.clone(), Value::Object(body));
    Ok(Some(kind))
}

/// The resolved config as JSON, for the summary echo.
pub fn echo(config: &ExperimentConfig) -> Value {
    let mut doc = serde_json::to_value(config).expect("config serializes");
    if let Some(task) = doc.get_mut("task").and_then(Value::as_object_mut) {
        if let Some((kind, Value::Object(body))) = task.iter().next().map(|(k, v)| (k.clone(), v.clone())) {
            let mut flat = Map::new();
            flat.insert("kind".into(), Value::String(kind));
            flat.extend(body);
            *task = flat;
        }
    }
    doc
}

/// Object with the keys in `pairs`, for summaries.
pub(crate) fn object(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
