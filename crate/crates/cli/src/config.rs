//! Experiment configuration.
//!
//! A config is a TOML file with the sections below. Every key is listed; keys
//! not shown are rejected.
//!
//! ```toml
//! [instance]
//! kind = "gaussian_mixture"      # gaussian_mixture | clustered | symmetric_pairs | point_cloud
//! seeds = [0, 1, 2, 3, 4]        # one dataset per seed; default [0]
//! cost_exponent = 2.0            # default 2
//! # gaussian_mixture
//! source_centers = [[-2.0, 2.0], [-2.0, -2.0]]
//! target_centers = [[2.0, 2.0], [2.0, -2.0]]
//! variance = 0.04                # per coordinate
//! points_per_cluster = 10
//! # clustered: source_centers, target_centers, group_size, radius, jitter (optional sigma)
//! # symmetric_pairs: cluster_sizes, scalars, epsilon, radius, dim
//! # point_cloud: source, target (CSV paths), weight_column (optional)
//!
//! [problem]
//! map = "identity"               # any map kind name
//! p = 1.0                        # a number or a list
//! q = 1.0
//! lambdas = [0.0, 0.1, 1.0]
//! lambda_scale = "absolute"      # absolute | window (clustered) | lambda_max (symmetric_pairs)
//! projector = [[1.0, 0.0], [0.0, 0.0]]   # subspace_elastic only
//!
//! [solver]
//! schedule = "sqrt_decay"        # sqrt_decay | geometric | constant
//! eta0 = 0.1                     # default 0.1, or 1e-4 for barycentric maps
//! ratio = 0.97                   # geometric only
//! iterations = 50
//! sinkhorn_iters = 500
//! sinkhorn_tol = 1e-12
//! round_each_iter = true
//! report = "averaged"            # averaged | final
//!
//! [output]
//! dir = "out"
//! average_seeds = true           # sweep: one row per lambda and p instead of per seed
//!
//! [convergence]
//! reference = "auto"             # auto | exact_lp | ground_truth | long_run
//! reference_iterations = 2000
//! reference_eta0 = 1.0           # step for the long run; defaults to solver.eta0
//!
//! [certify]
//! tol = 1e-8
//! candidate = "solver"           # solver | ground_truth
//!
//! [gaussian]
//! sigma0 = [[2.0, 0.0], [0.0, 1.0]]
//! sigma1 = [[1.0, 0.0], [0.0, 3.0]]
//! # or isotropic = { dim = 3, sigma0 = 1.0, sigma1 = 1.5 }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use schatten_ot::gaussian::GaussianPair;
use schatten_ot::measures::{TargetMode, WeightMode};
use schatten_ot::solver::{DEFAULT_ETA0, DEFAULT_ETA0_BARYCENTRIC, DEFAULT_OUTER_ITERS};
use schatten_ot::polytope::{DEFAULT_SINKHORN_ITERS, DEFAULT_SINKHORN_TOL};
use schatten_ot::{MapKind, Matrix, StepSchedule};
use serde::Deserialize;

/// A validation failure tied to a dotted key path.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Convergence,
    Certify,
    Gaussian,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
    #[default]
    Missing,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    kind: Option<String>,
    seeds: Option<Vec<u64>>,
    cost_exponent: Option<f64>,
    source_centers: Option<Vec<Vec<f64>>>,
    target_centers: Option<Vec<Vec<f64>>>,
    variance: Option<f64>,
    points_per_cluster: Option<usize>,
    group_size: Option<usize>,
    radius: Option<f64>,
    jitter: Option<f64>,
    cluster_sizes: Option<Vec<usize>>,
    scalars: Option<Vec<f64>>,
    epsilon: Option<f64>,
    dim: Option<usize>,
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    weight_column: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    map: Option<String>,
    #[serde(default)]
    p: OneOrMany,
    q: Option<f64>,
    lambdas: Option<Vec<f64>>,
    lambda_scale: Option<String>,
    projector: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    schedule: Option<String>,
    eta0: Option<f64>,
    ratio: Option<f64>,
    iterations: Option<usize>,
    sinkhorn_iters: Option<usize>,
    sinkhorn_tol: Option<f64>,
    round_each_iter: Option<bool>,
    report: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    average_seeds: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    reference: Option<String>,
    reference_iterations: Option<usize>,
    reference_eta0: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCertify {
    tol: Option<f64>,
    candidate: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIsotropic {
    dim: usize,
    sigma0: f64,
    sigma1: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    sigma0: Option<Vec<Vec<f64>>>,
    sigma1: Option<Vec<Vec<f64>>>,
    isotropic: Option<RawIsotropic>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    instance: Option<RawInstance>,
    problem: Option<RawProblem>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    convergence: RawConvergence,
    #[serde(default)]
    certify: RawCertify,
    gaussian: Option<RawGaussian>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceKind {
    GaussianMixture { source_centers: Vec<Vec<f64>>, target_centers: Vec<Vec<f64>>, variance: f64, points_per_cluster: usize },
    Clustered { source_centers: Vec<Vec<f64>>, target_centers: Vec<Vec<f64>>, group_size: usize, radius: f64, mode: TargetMode },
    SymmetricPairs { cluster_sizes: Vec<usize>, scalars: Vec<f64>, epsilon: f64, radius: f64, dim: usize },
    PointCloud { source: PathBuf, target: PathBuf, weights: WeightMode },
}

impl InstanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceKind::GaussianMixture { .. } => "gaussian_mixture",
            InstanceKind::Clustered { .. } => "clustered",
            InstanceKind::SymmetricPairs { .. } => "symmetric_pairs",
            InstanceKind::PointCloud { .. } => "point_cloud",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub seeds: Vec<u64>,
    pub cost_exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaScale {
    Absolute,
    /// Multiples of `g * Delta_min` of a clustered instance.
    Window,
    /// Multiples of `Lambda - 2 rho` of a symmetric-pairs instance.
    LambdaMax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub map: MapKind,
    pub p: Vec<f64>,
    pub q: f64,
    pub lambdas: Vec<f64>,
    pub lambda_scale: LambdaScale,
    pub projector: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub schedule: StepSchedule,
    pub iterations: usize,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub round_each_iter: bool,
    pub report_averaged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Auto,
    ExactLp,
    GroundTruth,
    LongRun,
}

impl Reference {
    pub fn name(self) -> &'static str {
        match self {
            Reference::Auto => "auto",
            Reference::ExactLp => "exact_lp",
            Reference::GroundTruth => "ground_truth",
            Reference::LongRun => "long_run",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSpec {
    pub reference: Reference,
    pub reference_iterations: usize,
    pub reference_eta0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifySpec {
    pub tol: f64,
    pub ground_truth_candidate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub instance: Option<InstanceSpec>,
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
    pub output_dir: PathBuf,
    pub average_seeds: bool,
    pub convergence: ConvergenceSpec,
    pub certify: CertifySpec,
    pub gaussian: Option<GaussianPair>,
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError { path: path.into(), message: message.into() });
    }

    fn require<T>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        if value.is_none() {
            self.push(path, "required");
        }
        value
    }

    fn positive(&mut self, value: f64, path: &str) -> f64 {
        if !(value > 0.0) || !value.is_finite() {
            self.push(path, format!("must be positive and finite, got {value}"));
        }
        value
    }
}

/// Keys that belong to each instance kind; anything else present is an error.
fn instance_keys(kind: &str) -> &'static [&'static str] {
    match kind {
        "gaussian_mixture" => &["source_centers", "target_centers", "variance", "points_per_cluster"],
        "clustered" => &["source_centers", "target_centers", "group_size", "radius", "jitter"],
        "symmetric_pairs" => &["cluster_sizes", "scalars", "epsilon", "radius", "dim"],
        "point_cloud" => &["source", "target", "weight_column"],
        _ => &[],
    }
}

fn present_instance_keys(r: &RawInstance) -> Vec<&'static str> {
    let mut keys = Vec::new();
    let mut add = |present: bool, k: &'static str| {
        if present {
            keys.push(k);
        }
    };
    add(r.source_centers.is_some(), "source_centers");
    add(r.target_centers.is_some(), "target_centers");
    add(r.variance.is_some(), "variance");
    add(r.points_per_cluster.is_some(), "points_per_cluster");
    add(r.group_size.is_some(), "group_size");
    add(r.radius.is_some(), "radius");
    add(r.jitter.is_some(), "jitter");
    add(r.cluster_sizes.is_some(), "cluster_sizes");
    add(r.scalars.is_some(), "scalars");
    add(r.epsilon.is_some(), "epsilon");
    add(r.dim.is_some(), "dim");
    add(r.source.is_some(), "source");
    add(r.target.is_some(), "target");
    add(r.weight_column.is_some(), "weight_column");
    keys
}

fn check_centers(errs: &mut Errors, centers: &[Vec<f64>], path: &str) {
    if centers.is_empty() {
        errs.push(path, "must list at least one center");
        return;
    }
    let d = centers[0].len();
    if d == 0 {
        errs.push(path, "centers must have at least one coordinate");
    }
    for (k, c) in centers.iter().enumerate() {
        if c.len() != d {
            errs.push(format!("{path}[{k}]"), format!("has {} coordinates, expected {d}", c.len()));
        }
        if c.iter().any(|x| !x.is_finite()) {
            errs.push(format!("{path}[{k}]"), "coordinates must be finite");
        }
    }
}

fn matrix_from_rows(errs: &mut Errors, rows: &[Vec<f64>], path: &str) -> Option<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        errs.push(path, "must be a nonempty square matrix given as a list of rows");
        return None;
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        errs.push(path, "entries must be finite");
        return None;
    }
    Some(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn file_exists(errs: &mut Errors, path: &Path, key: &str) {
    if !path.is_file() {
        errs.push(key, format!("file {} does not exist", path.display()));
    }
}

fn validate_instance(errs: &mut Errors, raw: RawInstance, base: &Path) -> Option<InstanceSpec> {
    let kind = errs.require(raw.kind.clone(), "instance.kind")?;
    let allowed = instance_keys(&kind);
    if allowed.is_empty() {
        errs.push(
            "instance.kind",
            format!("unknown kind {kind:?}; expected gaussian_mixture, clustered, symmetric_pairs or point_cloud"),
        );
        return None;
    }
    for key in present_instance_keys(&raw) {
        if !allowed.contains(&key) {
            errs.push(format!("instance.{key}"), format!("not used by kind {kind:?}"));
        }
    }
    let seeds = raw.seeds.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        errs.push("instance.seeds", "must not be empty");
    }
    let cost_exponent = errs.positive(raw.cost_exponent.unwrap_or(2.0), "instance.cost_exponent");

    let spec = match kind.as_str() {
        "gaussian_mixture" => {
            let sc = errs.require(raw.source_centers, "instance.source_centers");
            let tc = errs.require(raw.target_centers, "instance.target_centers");
            let variance = errs.require(raw.variance, "instance.variance");
            let ppc = errs.require(raw.points_per_cluster, "instance.points_per_cluster");
            if let Some(v) = variance {
                if !(v >= 0.0) || !v.is_finite() {
                    errs.push("instance.variance", format!("must be nonnegative, got {v}"));
                }
            }
            if ppc == Some(0) {
                errs.push("instance.points_per_cluster", "must be at least 1");
            }
            if let Some(c) = &sc {
                check_centers(errs, c, "instance.source_centers");
            }
            if let Some(c) = &tc {
                check_centers(errs, c, "instance.target_centers");
            }
            if let (Some(s), Some(t)) = (&sc, &tc) {
                if s.first().map(Vec::len) != t.first().map(Vec::len) {
                    errs.push("instance.target_centers", "dimension differs from source_centers");
                }
            }
            InstanceKind::GaussianMixture {
                source_centers: sc?,
                target_centers: tc?,
                variance: variance?,
                points_per_cluster: ppc?,
            }
        }
        "clustered" => {
            let sc = errs.require(raw.source_centers, "instance.source_centers");
            let tc = errs.require(raw.target_centers, "instance.target_centers");
            let g = errs.require(raw.group_size, "instance.group_size");
            let radius = raw.radius.unwrap_or(0.0);
            if !(radius >= 0.0) || !radius.is_finite() {
                errs.push("instance.radius", format!("must be nonnegative, got {radius}"));
            }
            if g == Some(0) {
                errs.push("instance.group_size", "must be at least 1");
            }
            if let Some(c) = &sc {
                check_centers(errs, c, "instance.source_centers");
            }
            if let Some(c) = &tc {
                check_centers(errs, c, "instance.target_centers");
            }
            if let (Some(s), Some(t)) = (&sc, &tc) {
                if s.len() != t.len() {
                    errs.push("instance.target_centers", format!("has {} centers, source has {}", t.len(), s.len()));
                }
            }
            let mode = match raw.jitter {
                None => TargetMode::Exact,
                Some(sigma) => TargetMode::Jitter { sigma: errs.positive(sigma, "instance.jitter") },
            };
            InstanceKind::Clustered { source_centers: sc?, target_centers: tc?, group_size: g?, radius, mode }
        }
        "symmetric_pairs" => {
            let sizes = errs.require(raw.cluster_sizes, "instance.cluster_sizes");
            let scalars = errs.require(raw.scalars, "instance.scalars");
            let epsilon = errs.require(raw.epsilon, "instance.epsilon").map(|e| errs.positive(e, "instance.epsilon"));
            let radius = raw.radius.unwrap_or(0.0);
            if !(radius >= 0.0) || !radius.is_finite() {
                errs.push("instance.radius", format!("must be nonnegative, got {radius}"));
            }
            let dim = raw.dim.unwrap_or(2);
            if dim < 2 {
                errs.push("instance.dim", "must be at least 2");
            }
            if let (Some(s), Some(c)) = (&sizes, &scalars) {
                if s.len() != c.len() {
                    errs.push("instance.scalars", format!("has {} entries, cluster_sizes has {}", c.len(), s.len()));
                }
                if s.len() < 2 {
                    errs.push("instance.cluster_sizes", "needs at least two clusters");
                }
                if s.iter().any(|&k| k == 0) {
                    errs.push("instance.cluster_sizes", "sizes must be at least 1");
                }
            }
            InstanceKind::SymmetricPairs { cluster_sizes: sizes?, scalars: scalars?, epsilon: epsilon?, radius, dim }
        }
        _ => {
            let source = errs.require(raw.source, "instance.source").map(|p| base.join(p));
            let target = errs.require(raw.target, "instance.target").map(|p| base.join(p));
            if let Some(p) = &source {
                file_exists(errs, p, "instance.source");
            }
            if let Some(p) = &target {
                file_exists(errs, p, "instance.target");
            }
            let weights = raw.weight_column.map_or(WeightMode::Uniform, WeightMode::Column);
            InstanceKind::PointCloud { source: source?, target: target?, weights }
        }
    };
    Some(InstanceSpec { kind: spec, seeds, cost_exponent })
}

fn validate_problem(errs: &mut Errors, raw: RawProblem, instance: Option<&InstanceSpec>) -> Option<ProblemSpec> {
    let map = match errs.require(raw.map, "problem.map")?.parse::<MapKind>() {
        Ok(k) => Some(k),
        Err(e) => {
            errs.push("problem.map", e.to_string());
            None
        }
    };
    let p = match raw.p {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(ps) => ps,
        OneOrMany::Missing => vec![1.0],
    };
    if p.is_empty() {
        errs.push("problem.p", "must not be empty");
    }
    for (k, v) in p.iter().enumerate() {
        if v.is_nan() || *v < 1.0 {
            errs.push(format!("problem.p[{k}]"), format!("must be at least 1, got {v}"));
        }
    }
    let q = raw.q.unwrap_or(1.0);
    if q.is_nan() || q < 1.0 || !q.is_finite() {
        errs.push("problem.q", format!("must be finite and at least 1, got {q}"));
    }
    let lambdas = errs.require(raw.lambdas, "problem.lambdas")?;
    if lambdas.is_empty() {
        errs.push("problem.lambdas", "must not be empty");
    }
    for (k, l) in lambdas.iter().enumerate() {
        if !(*l >= 0.0) || !l.is_finite() {
            errs.push(format!("problem.lambdas[{k}]"), format!("must be finite and nonnegative, got {l}"));
        }
    }
    let lambda_scale = match raw.lambda_scale.as_deref().unwrap_or("absolute") {
        "absolute" => LambdaScale::Absolute,
        "window" => LambdaScale::Window,
        "lambda_max" => LambdaScale::LambdaMax,
        other => {
            errs.push("problem.lambda_scale", format!("unknown scale {other:?}; expected absolute, window or lambda_max"));
            LambdaScale::Absolute
        }
    };
    let kind = instance.map(|i| &i.kind);
    match lambda_scale {
        LambdaScale::Window if !matches!(kind, Some(InstanceKind::Clustered { .. })) => {
            errs.push("problem.lambda_scale", "window scaling needs a clustered instance")
        }
        LambdaScale::LambdaMax if !matches!(kind, Some(InstanceKind::SymmetricPairs { .. })) => {
            errs.push("problem.lambda_scale", "lambda_max scaling needs a symmetric_pairs instance")
        }
        _ => {}
    }
    let projector = raw.projector.and_then(|rows| matrix_from_rows(errs, &rows, "problem.projector"));
    match map {
        Some(MapKind::SubspaceElastic) if projector.is_none() => errs.push("problem.projector", "required by subspace_elastic"),
        Some(k) if k != MapKind::SubspaceElastic && projector.is_some() => {
            errs.push("problem.projector", format!("not used by map {k}"))
        }
        _ => {}
    }
    Some(ProblemSpec { map: map?, p, q, lambdas, lambda_scale, projector })
}

fn validate_solver(errs: &mut Errors, raw: RawSolver, map: Option<MapKind>) -> SolverSpec {
    let barycentric = matches!(map, Some(MapKind::BarycentricMap | MapKind::BarycentricDisplacement));
    let eta0 = errs.positive(
        raw.eta0.unwrap_or(if barycentric { DEFAULT_ETA0_BARYCENTRIC } else { DEFAULT_ETA0 }),
        "solver.eta0",
    );
    let schedule = match raw.schedule.as_deref().unwrap_or("sqrt_decay") {
        "sqrt_decay" => StepSchedule::SqrtDecay { eta0 },
        "constant" => StepSchedule::Constant { eta0 },
        "geometric" => match raw.ratio {
            Some(ratio) if ratio > 0.0 && ratio < 1.0 => StepSchedule::Geometric { eta0, ratio },
            Some(ratio) => {
                errs.push("solver.ratio", format!("must lie in (0, 1), got {ratio}"));
                StepSchedule::Constant { eta0 }
            }
            None => {
                errs.push("solver.ratio", "required by the geometric schedule");
                StepSchedule::Constant { eta0 }
            }
        },
        other => {
            errs.push("solver.schedule", format!("unknown schedule {other:?}; expected sqrt_decay, geometric or constant"));
            StepSchedule::SqrtDecay { eta0 }
        }
    };
    if raw.ratio.is_some() && raw.schedule.as_deref() != Some("geometric") {
        errs.push("solver.ratio", "only used by the geometric schedule");
    }
    let iterations = raw.iterations.unwrap_or(DEFAULT_OUTER_ITERS);
    if iterations == 0 {
        errs.push("solver.iterations", "must be at least 1");
    }
    let sinkhorn_iters = raw.sinkhorn_iters.unwrap_or(DEFAULT_SINKHORN_ITERS);
    if sinkhorn_iters == 0 {
        errs.push("solver.sinkhorn_iters", "must be at least 1");
    }
    let sinkhorn_tol = errs.positive(raw.sinkhorn_tol.unwrap_or(DEFAULT_SINKHORN_TOL), "solver.sinkhorn_tol");
    let report_averaged = match raw.report.as_deref().unwrap_or("averaged") {
        "averaged" => true,
        "final" => false,
        other => {
            errs.push("solver.report", format!("unknown iterate {other:?}; expected averaged or final"));
            true
        }
    };
    SolverSpec {
        schedule,
        iterations,
        sinkhorn_iters,
        sinkhorn_tol,
        round_each_iter: raw.round_each_iter.unwrap_or(true),
        report_averaged,
    }
}

fn validate_gaussian(errs: &mut Errors, raw: RawGaussian) -> Option<GaussianPair> {
    let built = match (raw.sigma0, raw.sigma1, raw.isotropic) {
        (None, None, Some(iso)) => {
            if iso.dim == 0 {
                errs.push("gaussian.isotropic.dim", "must be at least 1");
                return None;
            }
            errs.positive(iso.sigma0, "gaussian.isotropic.sigma0");
            errs.positive(iso.sigma1, "gaussian.isotropic.sigma1");
            GaussianPair::isotropic(iso.dim, iso.sigma0, iso.sigma1).map_err(|e| ("gaussian.isotropic", e))
        }
        (Some(s0), Some(s1), None) => {
            let m0 = matrix_from_rows(errs, &s0, "gaussian.sigma0");
            let m1 = matrix_from_rows(errs, &s1, "gaussian.sigma1");
            let (m0, m1) = (m0?, m1?);
            if m0.shape() != m1.shape() {
                errs.push("gaussian.sigma1", "shape differs from sigma0");
                return None;
            }
            GaussianPair::new(m0, m1).map_err(|e| ("gaussian", e))
        }
        _ => {
            errs.push("gaussian", "give either sigma0 and sigma1, or isotropic");
            return None;
        }
    };
    match built {
        Ok(pair) => Some(pair),
        Err((path, e)) => {
            errs.push(path, e.to_string());
            None
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config for `command`. Relative file paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path, command: Command) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut errs = Errors(Vec::new());

        let instance = match raw.instance {
            Some(r) => validate_instance(&mut errs, r, base),
            None => {
                if command != Command::Gaussian {
                    errs.push("instance", "section is required");
                }
                None
            }
        };
        let problem = match raw.problem {
            Some(r) => validate_problem(&mut errs, r, instance.as_ref()),
            None => {
                errs.push("problem", "section is required");
                None
            }
        };
        let solver = validate_solver(&mut errs, raw.solver, problem.as_ref().map(|p| p.map));

        let reference = match raw.convergence.reference.as_deref().unwrap_or("auto") {
            "auto" => Reference::Auto,
            "exact_lp" => Reference::ExactLp,
            "ground_truth" => Reference::GroundTruth,
            "long_run" => Reference::LongRun,
            other => {
                errs.push(
                    "convergence.reference",
                    format!("unknown reference {other:?}; expected auto, exact_lp, ground_truth or long_run"),
                );
                Reference::Auto
            }
        };
        let reference_iterations = raw.convergence.reference_iterations.unwrap_or(2000);
        if reference_iterations == 0 {
            errs.push("convergence.reference_iterations", "must be at least 1");
        }
        let reference_eta0 = raw.convergence.reference_eta0.map_or(solver.schedule_eta0(), |e| {
            errs.positive(e, "convergence.reference_eta0")
        });
        if reference == Reference::ExactLp && problem.as_ref().is_some_and(|p| p.lambdas.iter().any(|l| *l != 0.0)) {
            errs.push("convergence.reference", "exact_lp is only a valid reference when every lambda is 0");
        }
        if reference == Reference::GroundTruth
            && !matches!(
                instance.as_ref().map(|i| &i.kind),
                Some(InstanceKind::Clustered { .. } | InstanceKind::SymmetricPairs { .. })
            )
        {
            errs.push("convergence.reference", "ground_truth needs a clustered or symmetric_pairs instance");
        }

        let certify_tol = errs.positive(raw.certify.tol.unwrap_or(1e-8), "certify.tol");
        let ground_truth_candidate = match raw.certify.candidate.as_deref().unwrap_or("solver") {
            "solver" => false,
            "ground_truth" => {
                if !matches!(
                    instance.as_ref().map(|i| &i.kind),
                    Some(InstanceKind::Clustered { .. } | InstanceKind::SymmetricPairs { .. })
                ) {
                    errs.push("certify.candidate", "ground_truth needs a clustered or symmetric_pairs instance");
                }
                true
            }
            other => {
                errs.push("certify.candidate", format!("unknown candidate {other:?}; expected solver or ground_truth"));
                false
            }
        };

        let gaussian = match raw.gaussian {
            Some(g) => validate_gaussian(&mut errs, g),
            None => {
                if command == Command::Gaussian {
                    errs.push("gaussian", "section is required");
                }
                None
            }
        };
        if command == Command::Gaussian {
            if let Some(p) = &problem {
                if !matches!(p.map, MapKind::CrossCovariance | MapKind::BarycentricDisplacement) {
                    errs.push("problem.map", "gaussian runs support cross_covariance and barycentric_displacement");
                }
                if p.lambda_scale != LambdaScale::Absolute {
                    errs.push("problem.lambda_scale", "gaussian runs use absolute lambdas");
                }
            }
        }

        let output_dir = raw.output.dir.unwrap_or_else(|| PathBuf::from("out"));
        if !errs.0.is_empty() {
            return Err(ConfigError::Invalid(errs.0));
        }
        Ok(Self {
            instance,
            problem: problem.expect("validated"),
            solver,
            output_dir: base.join(output_dir),
            average_seeds: raw.output.average_seeds.unwrap_or(true),
            convergence: ConvergenceSpec { reference, reference_iterations, reference_eta0 },
            certify: CertifySpec { tol: certify_tol, ground_truth_candidate },
            gaussian,
        })
    }

    /// Reads `path` and validates it.
    pub fn load(path: &Path, command: Command) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| ConfigError::Syntax(format!("config is not UTF-8: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::parse(&text, base, command)?, bytes))
    }

    /// Seeds the experiment runs over.
    pub fn seeds(&self) -> &[u64] {
        self.instance.as_ref().map_or(&[0][..], |i| &i.seeds)
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(i) = &mut self.instance {
            i.seeds = vec![seed];
        }
    }
}

impl SolverSpec {
    fn schedule_eta0(&self) -> f64 {
        match self.schedule {
            StepSchedule::SqrtDecay { eta0 } | StepSchedule::Constant { eta0 } | StepSchedule::Geometric { eta0, .. } => eta0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXTURE: &str = r#"
[instance]
kind = "gaussian_mixture"
seeds = [0, 1]
source_centers = [[-2.0, 2.0], [-2.0, -2.0]]
target_centers = [[2.0, 2.0], [2.0, -2.0]]
variance = 0.04
points_per_cluster = 10

[problem]
map = "identity"
lambdas = [0.0, 1.0]
"#;

    fn parse(text: &str, command: Command) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("."), command)
    }

    fn paths(err: ConfigError) -> Vec<String> {
        match err {
            ConfigError::Invalid(list) => list.into_iter().map(|e| e.path).collect(),
            other => panic!("expected field errors, got {other}"),
        }
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let c = parse(MIXTURE, Command::Sweep).unwrap();
        assert_eq!(c.solver.schedule, StepSchedule::SqrtDecay { eta0: 0.1 });
        assert_eq!(c.solver.iterations, 50);
        assert_eq!(c.solver.sinkhorn_iters, 500);
        assert_eq!(c.solver.sinkhorn_tol, 1e-12);
        assert_eq!(c.problem.p, vec![1.0]);
        assert_eq!(c.seeds(), &[0, 1]);
        assert!(c.solver.report_averaged);
    }

    #[test]
    fn barycentric_maps_default_to_the_small_step() {
        let text = MIXTURE.replace("\"identity\"", "\"barycentric_map\"");
        let c = parse(&text, Command::Sweep).unwrap();
        assert_eq!(c.solver.schedule, StepSchedule::SqrtDecay { eta0: 1e-4 });
    }

    #[test]
    fn empty_lambda_list_is_reported_with_its_path() {
        let text = MIXTURE.replace("lambdas = [0.0, 1.0]", "lambdas = []");
        assert_eq!(paths(parse(&text, Command::Sweep).unwrap_err()), vec!["problem.lambdas"]);
    }

    #[test]
    fn every_problem_is_collected() {
        let text = MIXTURE.replace("variance = 0.04", "variance = -1.0").replace("\"identity\"", "\"nope\"")
            + "[solver]\niterations = 0\nschedule = \"geometric\"\n";
        let got = paths(parse(&text, Command::Sweep).unwrap_err());
        for want in ["instance.variance", "problem.map", "solver.iterations", "solver.ratio"] {
            assert!(got.iter().any(|p| p == want), "{want} missing from {got:?}");
        }
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        let text = MIXTURE.replace("variance = 0.04", "variance = 0.04\nbogus = 1");
        assert!(matches!(parse(&text, Command::Sweep), Err(ConfigError::Syntax(_))));
        let text = MIXTURE.replace("variance = 0.04", "variance = 0.04\nepsilon = 0.5");
        assert_eq!(paths(parse(&text, Command::Sweep).unwrap_err()), vec!["instance.epsilon"]);
    }

    #[test]
    fn missing_files_and_sections() {
        let text = "[instance]\nkind = \"point_cloud\"\nsource = \"/no/such/a.csv\"\ntarget = \"/no/such/b.csv\"\n";
        let got = paths(parse(text, Command::Sweep).unwrap_err());
        assert_eq!(got, vec!["instance.source", "instance.target", "problem"]);
        let got = paths(parse("[problem]\nmap = \"cross_covariance\"\nlambdas = [1.0]\n", Command::Gaussian).unwrap_err());
        assert_eq!(got, vec!["gaussian"]);
    }

    #[test]
    fn lambda_scale_must_match_the_instance() {
        let text = MIXTURE.replace("lambdas = [0.0, 1.0]", "lambdas = [0.5]\nlambda_scale = \"window\"");
        assert_eq!(paths(parse(&text, Command::Sweep).unwrap_err()), vec!["problem.lambda_scale"]);
    }

    #[test]
    fn gaussian_section_validates_covariances() {
        let base = "[problem]\nmap = \"cross_covariance\"\nlambdas = [1.0]\n[gaussian]\n";
        let ok = parse(&format!("{base}isotropic = {{ dim = 2, sigma0 = 1.0, sigma1 = 2.0 }}\n"), Command::Gaussian).unwrap();
        assert_eq!(ok.gaussian.unwrap().sigma1, Matrix::identity(2, 2) * 4.0);
        let bad = format!("{base}sigma0 = [[1.0, 0.0], [0.0, -1.0]]\nsigma1 = [[1.0, 0.0], [0.0, 1.0]]\n");
        assert_eq!(paths(parse(&bad, Command::Gaussian).unwrap_err()), vec!["gaussian"]);
    }

    #[test]
    fn seed_override_replaces_the_list() {
        let mut c = parse(MIXTURE, Command::Sweep).unwrap();
        c.override_seed(7);
        assert_eq!(c.seeds(), &[7]);
    }
}
