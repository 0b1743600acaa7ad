//! Experiment runners.
//!
//! Each runner validates everything it can (instances are generated, maps
//! built) before the first solve, then fans the independent solves out in
//! parallel. Rows always come back in the order `p`, then `lambda`, then seed.
//!
//! CSV columns:
//!
//! * sweep: `instance_id,lambda,p,q,map_kind,seeds,transport_cost,effective_rank_coupling,effective_rank_map_image,marginal_error,support_size,objective,lp_cost,sinkhorn_cost`
//! * convergence: `instance_id,lambda,p,schedule,reference_source,reference,iter,tau,objective,running_best,excess,best_excess`
//! * certify: `instance_id,p,lambda,candidate,verdict,candidate_value,lp_value,gap,passed,objective,lower_bound,error`
//! * gaussian: `map_kind,lambda,rank,objective,transport_cost`

use std::io::Write;

use schatten_ot::gaussian::{
    cross_cov_objective, displacement_objective, gaussian_cross_cov_solution, gaussian_displacement_solution,
    transport_cost as gaussian_transport_cost, GaussianPair,
};
use schatten_ot::measures::{
    gen_clustered_instance, gen_gaussian_mixture, gen_symmetric_pairs_instance, load_point_cloud, ClusteredSpec,
    SymmetricPairsSpec,
};
use schatten_ot::metrics::evaluate;
use schatten_ot::oracle::{exact_ot_lp, kkt_certificate};
use schatten_ot::par::{self, Execution};
use schatten_ot::polytope::{round_to_polytope, sinkhorn_plan};
use schatten_ot::solver::{solve_many, Init};
use schatten_ot::{
    cost_matrix, AffineCouplingMap, DiscreteMeasure, Error, MapKind, Matrix, Problem, RegularizerTerm, SolveReport,
    SolverOptions, StepSchedule,
};

use crate::config::{ConfigError, ExperimentConfig, FieldError, InstanceKind, InstanceSpec, LambdaScale, Reference};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => RunError::Io(io),
            other => RunError::Numerical(other),
        }
    }
}

impl RunError {
    /// 2 for config errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

fn field_error(path: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Config(ConfigError::Invalid(vec![FieldError { path: path.into(), message: e.to_string() }]))
}

/// One generated or loaded dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub id: String,
    pub seed: u64,
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub ground_truth: Option<Matrix>,
    /// Multiplier applied to the configured lambdas.
    pub lambda_unit: f64,
}

pub fn build_dataset(spec: &InstanceSpec, scale: LambdaScale, seed: u64) -> Result<Dataset, RunError> {
    let id = format!("{}-s{seed}", spec.kind.name());
    let (source, target, ground_truth, window, lambda_max) = match &spec.kind {
        InstanceKind::GaussianMixture { source_centers, target_centers, variance, points_per_cluster } => {
            // the two sides draw from independent streams of the same seed
            let s = gen_gaussian_mixture(source_centers, *variance, *points_per_cluster, seed.wrapping_mul(2))
                .map_err(|e| field_error("instance", e))?;
            let t = gen_gaussian_mixture(target_centers, *variance, *points_per_cluster, seed.wrapping_mul(2) + 1)
                .map_err(|e| field_error("instance", e))?;
            (s, t, None, None, None)
        }
        InstanceKind::Clustered { source_centers, target_centers, group_size, radius, mode } => {
            let inst = gen_clustered_instance(&ClusteredSpec {
                group_size: *group_size,
                source_centers: source_centers.clone(),
                target_centers: target_centers.clone(),
                radius: *radius,
                mode: *mode,
                seed,
            })
            .map_err(|e| field_error("instance", e))?;
            let window = inst.lambda_window_upper;
            (inst.source, inst.target, Some(inst.ground_truth.plan), Some(window), None)
        }
        InstanceKind::SymmetricPairs { cluster_sizes, scalars, epsilon, radius, dim } => {
            let inst = gen_symmetric_pairs_instance(&SymmetricPairsSpec {
                cluster_sizes: cluster_sizes.clone(),
                scalars: scalars.clone(),
                epsilon: *epsilon,
                radius: *radius,
                dim: *dim,
                seed,
            })
            .map_err(|e| field_error("instance", e))?;
            let lm = inst.lambda_max;
            (inst.source, inst.target, Some(inst.ground_truth.plan), None, Some(lm))
        }
        InstanceKind::PointCloud { source, target, weights } => {
            let s = load_point_cloud(source, weights.clone()).map_err(|e| field_error("instance.source", e))?;
            let t = load_point_cloud(target, weights.clone()).map_err(|e| field_error("instance.target", e))?;
            if s.dim() != t.dim() {
                return Err(field_error(
                    "instance.target",
                    format!("dimension {} differs from the source dimension {}", t.dim(), s.dim()),
                ));
            }
            (s, t, None, None, None)
        }
    };
    let lambda_unit = match scale {
        LambdaScale::Absolute => 1.0,
        LambdaScale::Window => window.filter(|w| w.is_finite()).ok_or_else(|| {
            field_error("problem.lambda_scale", "the instance has a single cluster, its window is unbounded")
        })?,
        LambdaScale::LambdaMax => lambda_max.expect("validated against the instance kind"),
    };
    Ok(Dataset { id, seed, source, target, ground_truth, lambda_unit })
}

/// A dataset paired with one regularized problem per `p`, all at strength 0.
struct Prepared {
    data: Dataset,
    base: Vec<Problem>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Vec<Prepared>, RunError> {
    let spec = cfg.instance.as_ref().ok_or_else(|| field_error("instance", "section is required"))?;
    let mut out = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let data = build_dataset(spec, cfg.problem.lambda_scale, seed)?;
        let map = AffineCouplingMap::new(cfg.problem.map, &data.source, &data.target, cfg.problem.projector.as_ref())
            .map_err(|e| {
                field_error(if cfg.problem.projector.is_some() { "problem.projector" } else { "problem.map" }, e)
            })?;
        let cost = cost_matrix(&data.source, &data.target, spec.cost_exponent).map_err(|e| field_error("instance", e))?;
        let mut base = Vec::with_capacity(cfg.problem.p.len());
        for &p in &cfg.problem.p {
            let term = RegularizerTerm::new(0.0, p, cfg.problem.q, map.clone()).map_err(|e| field_error("problem.p", e))?;
            base.push(Problem::new(cost.clone(), data.source.weights().clone(), data.target.weights().clone(), vec![term])?);
        }
        out.push(Prepared { data, base });
    }
    Ok(out)
}

fn solver_options(cfg: &ExperimentConfig, seed: u64) -> SolverOptions {
    SolverOptions {
        schedule: cfg.solver.schedule,
        max_outer_iters: cfg.solver.iterations,
        sinkhorn_iters: cfg.solver.sinkhorn_iters,
        sinkhorn_tol: cfg.solver.sinkhorn_tol,
        round_each_iter: cfg.solver.round_each_iter,
        average_iterates: true,
        init: Init::Product,
        seed,
    }
}

/// Index into the prepared data plus the actual lambda of one solve.
#[derive(Clone, Copy)]
struct Job {
    data: usize,
    p_index: usize,
    lambda: f64,
}

fn jobs(cfg: &ExperimentConfig, prepared: &[Prepared]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for p_index in 0..cfg.problem.p.len() {
        for &l in &cfg.problem.lambdas {
            for (data, prep) in prepared.iter().enumerate() {
                jobs.push(Job { data, p_index, lambda: l * prep.data.lambda_unit });
            }
        }
    }
    jobs
}

fn run_solves(
    cfg: &ExperimentConfig,
    prepared: &[Prepared],
    jobs: &[Job],
    exec: Execution,
) -> Result<Vec<(Problem, SolveReport)>, RunError> {
    let batch: Vec<(Problem, SolverOptions)> = jobs
        .iter()
        .map(|j| {
            let prep = &prepared[j.data];
            (prep.base[j.p_index].with_strength(j.lambda), solver_options(cfg, prep.data.seed))
        })
        .collect();
    let reports = solve_many(&batch, exec);
    batch.into_iter().zip(reports).map(|((problem, _), r)| Ok((problem, r?))).collect()
}

fn reported<'a>(cfg: &ExperimentConfig, r: &'a SolveReport) -> &'a Matrix {
    if cfg.solver.report_averaged {
        &r.averaged.plan
    } else {
        &r.final_coupling.plan
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub instance_id: String,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub map_kind: MapKind,
    pub seeds: usize,
    pub transport_cost: f64,
    pub effective_rank_coupling: f64,
    pub effective_rank_map_image: Option<f64>,
    pub marginal_error: f64,
    pub support_size: f64,
    pub objective: f64,
    /// Exact unregularized OT cost; `None` when the instance is too large for the LP.
    pub lp_cost: Option<f64>,
    /// Cost of the rounded entropic plan with regularization 1.
    pub sinkhorn_cost: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "instance_id,lambda,p,q,map_kind,seeds,transport_cost,effective_rank_coupling,effective_rank_map_image,marginal_error,support_size,objective,lp_cost,sinkhorn_cost";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.12e},{:.12},{},{:e},{},{:.12e},{},{:.12e}",
            self.instance_id,
            self.lambda,
            self.p,
            self.q,
            self.map_kind,
            self.seeds,
            self.transport_cost,
            self.effective_rank_coupling,
            self.effective_rank_map_image.map(|r| format!("{r:.12}")).unwrap_or_default(),
            self.marginal_error,
            self.support_size,
            self.objective,
            self.lp_cost.map(|c| format!("{c:.12e}")).unwrap_or_default(),
            self.sinkhorn_cost,
        )
    }

    fn mean(rows: &[SweepRow], id: String) -> SweepRow {
        let k = rows.len() as f64;
        let avg = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
        let image = rows.iter().map(|r| r.effective_rank_map_image).collect::<Option<Vec<f64>>>();
        let lp = rows.iter().map(|r| r.lp_cost).collect::<Option<Vec<f64>>>();
        SweepRow {
            instance_id: id,
            seeds: rows.len(),
            transport_cost: avg(|r| r.transport_cost),
            effective_rank_coupling: avg(|r| r.effective_rank_coupling),
            effective_rank_map_image: image.map(|v| v.iter().sum::<f64>() / k),
            marginal_error: avg(|r| r.marginal_error),
            support_size: avg(|r| r.support_size),
            objective: avg(|r| r.objective),
            lp_cost: lp.map(|v| v.iter().sum::<f64>() / k),
            sinkhorn_cost: avg(|r| r.sinkhorn_cost),
            ..rows[0].clone()
        }
    }
}

/// Per-dataset reference costs: exact LP (when it fits) and entropic Sinkhorn at regularization 1.
fn baselines(cfg: &ExperimentConfig, prepared: &[Prepared], exec: Execution) -> Result<Vec<(Option<f64>, f64)>, RunError> {
    let results = par::map(prepared, exec, |prep| -> Result<(Option<f64>, f64), Error> {
        let problem = &prep.base[0];
        let c = &problem.cost.entries;
        let lp = match exact_ot_lp(c, &problem.a, &problem.b) {
            Ok(sol) => Some(sol.value),
            Err(Error::Capacity(_)) => None,
            Err(e) => return Err(e),
        };
        let entropic = sinkhorn_plan(c, &problem.a, &problem.b, 1.0, cfg.solver.sinkhorn_iters, cfg.solver.sinkhorn_tol)?;
        let rounded = round_to_polytope(&entropic.coupling.plan, &problem.a, &problem.b)?;
        Ok((lp, problem.transport_cost(&rounded.plan)?))
    });
    results.into_iter().map(|r| r.map_err(RunError::from)).collect()
}

pub fn sweep_rows(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<SweepRow>, RunError> {
    let prepared = prepare(cfg)?;
    let jobs = jobs(cfg, &prepared);
    let refs = baselines(cfg, &prepared, exec)?;
    let solved = run_solves(cfg, &prepared, &jobs, exec)?;

    let mut rows = Vec::with_capacity(jobs.len());
    for (job, (problem, report)) in jobs.iter().zip(&solved) {
        let plan = reported(cfg, report);
        let q = evaluate(problem, plan)?;
        let (lp_cost, sinkhorn_cost) = refs[job.data];
        rows.push(SweepRow {
            instance_id: prepared[job.data].data.id.clone(),
            lambda: job.lambda,
            p: cfg.problem.p[job.p_index],
            q: cfg.problem.q,
            map_kind: cfg.problem.map,
            seeds: 1,
            transport_cost: q.transport_cost,
            effective_rank_coupling: q.effective_rank_coupling,
            effective_rank_map_image: q.effective_rank_map_image,
            marginal_error: q.marginal_error,
            support_size: q.support_size as f64,
            objective: problem.objective(plan)?,
            lp_cost,
            sinkhorn_cost,
        });
    }
    if !cfg.average_seeds {
        return Ok(rows);
    }
    let per_group = prepared.len();
    let kind = cfg.instance.as_ref().map_or("instance", |i| i.kind.name());
    Ok(rows.chunks(per_group).map(|group| SweepRow::mean(group, format!("{kind}-mean"))).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub instance_id: String,
    pub lambda: f64,
    pub p: f64,
    pub schedule: &'static str,
    pub reference_source: &'static str,
    pub reference: f64,
    pub iter: usize,
    pub tau: f64,
    pub objective: f64,
    pub running_best: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "instance_id,lambda,p,schedule,reference_source,reference,iter,tau,objective,running_best,excess,best_excess";

    pub fn excess(&self) -> f64 {
        self.objective - self.reference
    }

    pub fn best_excess(&self) -> f64 {
        self.running_best - self.reference
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.15e},{},{:e},{:.15e},{:.15e},{:e},{:e}",
            self.instance_id,
            self.lambda,
            self.p,
            self.schedule,
            self.reference_source,
            self.reference,
            self.iter,
            self.tau,
            self.objective,
            self.running_best,
            self.excess(),
            self.best_excess()
        )
    }
}

/// Optimal value of `problem` according to `reference`, with the name of the source used.
fn reference_value(
    cfg: &ExperimentConfig,
    reference: Reference,
    problem: &Problem,
    ground_truth: Option<&Matrix>,
    seed: u64,
) -> Result<(&'static str, f64), RunError> {
    let lambda = problem.terms.first().map_or(0.0, |t| t.strength);
    match reference {
        Reference::ExactLp => {
            let sol = exact_ot_lp(&problem.cost.entries, &problem.a, &problem.b)?;
            Ok((Reference::ExactLp.name(), sol.value))
        }
        Reference::GroundTruth => {
            let gt = ground_truth.ok_or_else(|| field_error("convergence.reference", "instance has no ground truth"))?;
            Ok((Reference::GroundTruth.name(), problem.objective(gt)?))
        }
        Reference::LongRun => {
            let options = SolverOptions {
                schedule: StepSchedule::SqrtDecay { eta0: cfg.convergence.reference_eta0 },
                max_outer_iters: cfg.convergence.reference_iterations,
                ..solver_options(cfg, seed)
            };
            let r = schatten_ot::solve(problem, &options)?;
            let value = r.best_objective().min(problem.objective(&r.averaged.plan)?);
            Ok((Reference::LongRun.name(), value))
        }
        Reference::Auto => {
            if lambda == 0.0 {
                match reference_value(cfg, Reference::ExactLp, problem, ground_truth, seed) {
                    Err(RunError::Numerical(Error::Capacity(_))) => {}
                    other => return other,
                }
            }
            if let Some(gt) = ground_truth {
                match kkt_certificate(problem, gt, cfg.certify.tol) {
                    Ok(cert) if cert.passed => return Ok((Reference::GroundTruth.name(), cert.objective)),
                    Ok(_) | Err(Error::Capacity(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            reference_value(cfg, Reference::LongRun, problem, ground_truth, seed)
        }
    }
}

pub fn convergence_rows(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<TraceRow>, RunError> {
    let prepared = prepare(cfg)?;
    let jobs = jobs(cfg, &prepared);
    let solved = run_solves(cfg, &prepared, &jobs, exec)?;
    let refs = par::map_range(jobs.len(), exec, |i| {
        let data = &prepared[jobs[i].data].data;
        reference_value(cfg, cfg.convergence.reference, &solved[i].0, data.ground_truth.as_ref(), data.seed)
    });

    let mut rows = Vec::new();
    for ((job, (_, report)), reference) in jobs.iter().zip(&solved).zip(refs) {
        let (source, value) = reference?;
        let best = report.running_best();
        for k in 0..report.iterations_used {
            rows.push(TraceRow {
                instance_id: prepared[job.data].data.id.clone(),
                lambda: job.lambda,
                p: cfg.problem.p[job.p_index],
                schedule: report.schedule.name(),
                reference_source: source,
                reference: value,
                iter: k + 1,
                tau: report.step_trace[k],
                objective: report.objective_trace[k],
                running_best: best[k],
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct CertifyRow {
    pub instance_id: String,
    pub p: f64,
    pub lambda: f64,
    pub candidate: &'static str,
    pub outcome: Result<schatten_ot::oracle::CertificateReport, String>,
}

impl CertifyRow {
    pub const CSV_HEADER: &'static str =
        "instance_id,p,lambda,candidate,verdict,candidate_value,lp_value,gap,passed,objective,lower_bound,error";

    pub fn csv(&self) -> String {
        let head = format!("{},{},{},{}", self.instance_id, self.p, self.lambda, self.candidate);
        match &self.outcome {
            Ok(r) => format!(
                "{head},{},{:.15e},{:.15e},{:e},{},{:.15e},{:.15e},",
                r.verdict, r.candidate_value, r.lp_value, r.gap, r.passed, r.objective, r.lower_bound
            ),
            Err(e) => format!("{head},error,,,,false,,,\"{}\"", e.replace('"', "'")),
        }
    }
}

pub fn certify_rows(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<CertifyRow>, RunError> {
    let prepared = prepare(cfg)?;
    let jobs = jobs(cfg, &prepared);
    let from_truth = cfg.certify.ground_truth_candidate;
    let candidates: Vec<(Problem, Matrix)> = if from_truth {
        jobs.iter()
            .map(|j| {
                let prep = &prepared[j.data];
                let gt = prep.data.ground_truth.clone().expect("validated: instance has a ground truth");
                (prep.base[j.p_index].with_strength(j.lambda), gt)
            })
            .collect()
    } else {
        run_solves(cfg, &prepared, &jobs, exec)?
            .into_iter()
            .map(|(problem, report)| {
                let plan = reported(cfg, &report).clone();
                (problem, plan)
            })
            .collect()
    };
    let outcomes = par::map(&candidates[..], exec, |(problem, plan)| kkt_certificate(problem, plan, cfg.certify.tol));

    let mut rows = Vec::with_capacity(jobs.len());
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let outcome = match outcome {
            Ok(r) => Ok(r),
            Err(e @ Error::Capacity(_)) => Err(e.to_string()),
            Err(e) => return Err(e.into()),
        };
        rows.push(CertifyRow {
            instance_id: prepared[job.data].data.id.clone(),
            p: cfg.problem.p[job.p_index],
            lambda: job.lambda,
            candidate: if from_truth { "ground_truth" } else { "solver" },
            outcome,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianRow {
    pub map_kind: MapKind,
    pub lambda: f64,
    pub rank: usize,
    pub objective: f64,
    pub transport_cost: f64,
}

impl GaussianRow {
    pub const CSV_HEADER: &'static str = "map_kind,lambda,rank,objective,transport_cost";

    pub fn csv(&self) -> String {
        format!("{},{},{},{:.15e},{:.15e}", self.map_kind, self.lambda, self.rank, self.objective, self.transport_cost)
    }
}

pub fn gaussian_rows(cfg: &ExperimentConfig) -> Result<Vec<GaussianRow>, RunError> {
    let pair: &GaussianPair = cfg.gaussian.as_ref().ok_or_else(|| field_error("gaussian", "section is required"))?;
    let kind = cfg.problem.map;
    if kind == MapKind::BarycentricDisplacement && !pair.is_commuting() {
        return Err(field_error("gaussian", "the displacement closed form needs commuting covariances"));
    }
    let mut rows = Vec::with_capacity(cfg.problem.lambdas.len());
    for &lambda in &cfg.problem.lambdas {
        let (rank, k, objective) = match kind {
            MapKind::CrossCovariance => {
                let s = gaussian_cross_cov_solution(pair, lambda)?;
                let obj = cross_cov_objective(pair, &s.k, lambda)?;
                (s.rank, s.k, obj)
            }
            _ => {
                let s = gaussian_displacement_solution(pair, lambda)?;
                let obj = displacement_objective(pair, &s.k, lambda)?;
                (s.rank, s.k, obj)
            }
        };
        rows.push(GaussianRow { map_kind: kind, lambda, rank, objective, transport_cost: gaussian_transport_cost(pair, &k) });
    }
    Ok(rows)
}

/// Comment lines written at the top of every CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub build: String,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seeds: &[u64]) -> Self {
        use sha2::{Digest, Sha256};
        Self { config_sha256: hex::encode(Sha256::digest(config_bytes)), seeds: seeds.to_vec(), build: build_id() }
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "# config_sha256={}", self.config_sha256)?;
        writeln!(out, "# seed={}", seeds.join(";"))?;
        writeln!(out, "# build={}", self.build)
    }
}

pub fn build_id() -> String {
    let mode = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    let mut id = format!("{} {} {mode}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    if let Some(extra) = option_env!("SCHATTEN_OT_BUILD_ID") {
        id.push(' ');
        id.push_str(extra);
    }
    id
}

/// Writes `rows` under `header` to `<output_dir>/<name>`, returning the path.
pub fn write_csv(
    cfg: &ExperimentConfig,
    prov: &Provenance,
    name: &str,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<std::path::PathBuf, RunError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(name);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    prov.write(&mut out)?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(path)
}

pub fn run_sweep(cfg: &ExperimentConfig, prov: &Provenance) -> Result<std::path::PathBuf, RunError> {
    let rows = sweep_rows(cfg, Execution::Parallel)?;
    write_csv(cfg, prov, "sweep.csv", SweepRow::CSV_HEADER, rows.iter().map(SweepRow::csv))
}

pub fn run_convergence(cfg: &ExperimentConfig, prov: &Provenance) -> Result<std::path::PathBuf, RunError> {
    let rows = convergence_rows(cfg, Execution::Parallel)?;
    write_csv(cfg, prov, "convergence.csv", TraceRow::CSV_HEADER, rows.iter().map(TraceRow::csv))
}

pub fn run_certify(cfg: &ExperimentConfig, prov: &Provenance) -> Result<std::path::PathBuf, RunError> {
    let rows = certify_rows(cfg, Execution::Parallel)?;
    write_csv(cfg, prov, "certify.csv", CertifyRow::CSV_HEADER, rows.iter().map(CertifyRow::csv))
}

pub fn run_gaussian(cfg: &ExperimentConfig, prov: &Provenance) -> Result<std::path::PathBuf, RunError> {
    let rows = gaussian_rows(cfg)?;
    write_csv(cfg, prov, "gaussian.csv", GaussianRow::CSV_HEADER, rows.iter().map(GaussianRow::csv))
}
