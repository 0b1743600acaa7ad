//! KL mirror descent for the composite objective.
//!
//! Each iteration tilts the current coupling by `exp(-tau_k (C + sum_i G_i))`,
//! normalizes, projects back onto `U(a, b)` with log-domain Sinkhorn and
//! optionally rounds to exact feasibility. The uniform average of the produced
//! iterates is re-rounded and returned next to the last iterate.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::error::{shape_check, Error, Result};
use crate::measures::{cost_matrix, CostMatrix, DiscreteMeasure};
use crate::par::{self, Execution};
use crate::polytope::{kl_project_log_warm, round_to_polytope, Coupling, DEFAULT_SINKHORN_ITERS, DEFAULT_SINKHORN_TOL, ENTRY_FLOOR};
use crate::regmaps::RegularizerTerm;
use crate::{Matrix, Vector};

/// Cost plus regularizer terms over `U(a, b)`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub cost: CostMatrix,
    pub a: Vector,
    pub b: Vector,
    pub terms: Vec<RegularizerTerm>,
}

impl Problem {
    pub fn new(cost: CostMatrix, a: Vector, b: Vector, terms: Vec<RegularizerTerm>) -> Result<Self> {
        let (m, n) = cost.entries.shape();
        shape_check(a.len() == m && b.len() == n, || {
            format!("cost is {m}x{n} but marginals have lengths {} and {}", a.len(), b.len())
        })?;
        for (k, t) in terms.iter().enumerate() {
            shape_check(t.map.input_shape() == (m, n), || {
                format!("term {k} expects {:?} couplings, cost is {m}x{n}", t.map.input_shape())
            })?;
        }
        Ok(Self { cost, a, b, terms })
    }

    /// Squared Euclidean cost between the two measures.
    pub fn from_measures(source: &DiscreteMeasure, target: &DiscreteMeasure, terms: Vec<RegularizerTerm>) -> Result<Self> {
        let cost = cost_matrix(source, target, 2.0)?;
        Self::new(cost, source.weights().clone(), target.weights().clone(), terms)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.cost.entries.shape()
    }

    /// The same problem with every term's strength replaced by `lambda`.
    pub fn with_strength(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.strength = lambda;
        }
        out
    }

    pub fn transport_cost(&self, p: &Matrix) -> Result<f64> {
        self.check(p)?;
        Ok(self.cost.entries.dot(p))
    }

    fn check(&self, p: &Matrix) -> Result<()> {
        shape_check(p.shape() == self.shape(), || {
            format!("coupling is {:?}, problem is {:?}", p.shape(), self.shape())
        })
    }

    pub fn objective(&self, p: &Matrix) -> Result<f64> {
        let mut value = self.transport_cost(p)?;
        for (k, t) in self.terms.iter().enumerate() {
            value += t.penalty(p).map_err(|e| tag_term(k, e))?;
        }
        Ok(value)
    }

    /// `sum_i lambda_i A_i^*(G_i)`, without the cost.
    pub fn subgradient(&self, p: &Matrix) -> Result<Matrix> {
        self.check(p)?;
        let mut g = Matrix::zeros(p.nrows(), p.ncols());
        for (k, t) in self.terms.iter().enumerate() {
            g += t.subgradient(p).map_err(|e| tag_term(k, e))?;
        }
        Ok(g)
    }
}

fn tag_term(k: usize, e: Error) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("term {k}: {msg}")),
        other => other,
    }
}

pub fn objective(problem: &Problem, p: &Matrix) -> Result<f64> {
    problem.objective(p)
}

pub fn subgradient(problem: &Problem, p: &Matrix) -> Result<Matrix> {
    problem.subgradient(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    /// `eta0 / sqrt(k)`.
    SqrtDecay { eta0: f64 },
    /// `eta0 * ratio^(k-1)`.
    Geometric { eta0: f64, ratio: f64 },
    Constant { eta0: f64 },
}

impl StepSchedule {
    /// Step size at iteration `k >= 1`.
    pub fn step_size(&self, k: usize) -> f64 {
        let k = k.max(1);
        match *self {
            StepSchedule::SqrtDecay { eta0 } => eta0 / (k as f64).sqrt(),
            StepSchedule::Geometric { eta0, ratio } => eta0 * ratio.powi(k as i32 - 1),
            StepSchedule::Constant { eta0 } => eta0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta0 = match *self {
            StepSchedule::SqrtDecay { eta0 } | StepSchedule::Constant { eta0 } => eta0,
            StepSchedule::Geometric { eta0, ratio } => {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::Argument(format!("geometric ratio must lie in (0, 1), got {ratio}")));
                }
                eta0
            }
        };
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::Argument(format!("initial step size must be positive, got {eta0}")));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSchedule::SqrtDecay { .. } => "sqrt_decay",
            StepSchedule::Geometric { .. } => "geometric",
            StepSchedule::Constant { .. } => "constant",
        }
    }
}

pub fn step_size(schedule: &StepSchedule, k: usize) -> f64 {
    schedule.step_size(k)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `a b^T`.
    Product,
    Given(Matrix),
}

/// Step size used for coupling-valued maps.
pub const DEFAULT_ETA0: f64 = 0.1;
/// Step size used for barycentric maps.
pub const DEFAULT_ETA0_BARYCENTRIC: f64 = 1e-4;
pub const DEFAULT_OUTER_ITERS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub schedule: StepSchedule,
    pub max_outer_iters: usize,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub round_each_iter: bool,
    pub average_iterates: bool,
    pub init: Init,
    /// Recorded for provenance; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::SqrtDecay { eta0: DEFAULT_ETA0 },
            max_outer_iters: DEFAULT_OUTER_ITERS,
            sinkhorn_iters: DEFAULT_SINKHORN_ITERS,
            sinkhorn_tol: DEFAULT_SINKHORN_TOL,
            round_each_iter: true,
            average_iterates: true,
            init: Init::Product,
            seed: 0,
        }
    }
}

impl SolverOptions {
    /// Defaults with the smaller initial step used for barycentric maps.
    pub fn barycentric() -> Self {
        Self { schedule: StepSchedule::SqrtDecay { eta0: DEFAULT_ETA0_BARYCENTRIC }, ..Self::default() }
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_outer_iters = iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_outer_iters == 0 {
            return Err(Error::Argument("max_outer_iters must be at least 1".into()));
        }
        if self.sinkhorn_iters == 0 {
            return Err(Error::Argument("sinkhorn_iters must be at least 1".into()));
        }
        if !(self.sinkhorn_tol > 0.0) {
            return Err(Error::Argument(format!("sinkhorn_tol must be positive, got {}", self.sinkhorn_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// The last iterate.
    pub final_coupling: Coupling,
    /// Uniform mean of the iterates, rounded back into `U(a, b)`.
    pub averaged: Coupling,
    /// Objective of the iterate produced at each iteration.
    pub objective_trace: Vec<f64>,
    pub marginal_error_trace: Vec<f64>,
    pub step_trace: Vec<f64>,
    pub iterations_used: usize,
    pub wall_time: Duration,
    pub schedule: StepSchedule,
}

impl SolveReport {
    /// Best objective seen up to and including each iteration.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.objective_trace
            .iter()
            .map(|v| {
                best = best.min(*v);
                best
            })
            .collect()
    }

    pub fn best_objective(&self) -> f64 {
        self.objective_trace.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `iter,tau,objective,marginal_error`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,tau,objective,marginal_error")?;
        for k in 0..self.iterations_used {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                k + 1,
                self.step_trace[k],
                self.objective_trace[k],
                self.marginal_error_trace[k]
            )?;
        }
        Ok(())
    }
}

fn initial_plan(problem: &Problem, init: &Init) -> Result<Matrix> {
    match init {
        Init::Product => Ok(&problem.a * problem.b.transpose()),
        Init::Given(p0) => {
            problem.check(p0)?;
            if p0.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::Argument("initial coupling must be finite and nonnegative".into()));
            }
            if p0.iter().all(|x| *x == 0.0) {
                return Err(Error::Degenerate("initial coupling is zero".into()));
            }
            Ok(p0.clone())
        }
    }
}

pub fn solve(problem: &Problem, options: &SolverOptions) -> Result<SolveReport> {
    options.validate()?;
    let started = Instant::now();
    let (m, n) = problem.shape();
    let (a, b) = (&problem.a, &problem.b);
    let floor = ENTRY_FLOOR.ln();
    let t = options.max_outer_iters;

    let mut p = initial_plan(problem, &options.init)?;
    let mut sum = Matrix::zeros(m, n);
    let mut objective_trace = Vec::with_capacity(t);
    let mut marginal_error_trace = Vec::with_capacity(t);
    let mut step_trace = Vec::with_capacity(t);
    let mut last = None;
    let mut potential: Option<Vector> = None;

    for k in 1..=t {
        let tau = options.schedule.step_size(k);
        let grad = &problem.cost.entries + problem.subgradient(&p)?;
        let mut tilt = Matrix::from_fn(m, n, |i, j| p[(i, j)].max(ENTRY_FLOOR).ln().max(floor) - tau * grad[(i, j)]);
        if let Some(bad) = tilt.iter().find(|x| !x.is_finite()) {
            let max_tilt = grad.iter().fold(0.0f64, |acc, g| acc.max((tau * g).abs()));
            return Err(Error::Numerical(format!(
                "divergent update at iteration {k}: tau = {tau:e}, max tilt entry = {max_tilt:e}, got {bad}"
            )));
        }
        let max = tilt.max();
        let lse = max + tilt.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        tilt.add_scalar_mut(-lse);

        let projected = kl_project_log_warm(&tilt, a, b, potential.as_ref(), options.sinkhorn_iters, options.sinkhorn_tol)
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("outer iteration {k}: {msg}")),
                other => other,
            })?;
        potential = Some(projected.col_potential.clone());
        let next = if options.round_each_iter {
            round_to_polytope(&projected.coupling.plan, a, b)?
        } else {
            projected.coupling
        };
        p = next.plan.clone();
        sum += &p;
        objective_trace.push(problem.objective(&p)?);
        marginal_error_trace.push(next.marginal_error());
        step_trace.push(tau);
        last = Some(next);
    }

    let final_coupling = last.expect("at least one iteration");
    let averaged = if options.average_iterates {
        round_to_polytope(&(sum / t as f64), a, b)?
    } else {
        final_coupling.clone()
    };
    Ok(SolveReport {
        final_coupling,
        averaged,
        objective_trace,
        marginal_error_trace,
        step_trace,
        iterations_used: t,
        wall_time: started.elapsed(),
        schedule: options.schedule,
    })
}

/// Solves independent problems, in parallel when `exec` allows it.
pub fn solve_many(jobs: &[(Problem, SolverOptions)], exec: Execution) -> Vec<Result<SolveReport>> {
    par::map(jobs, exec, |(problem, options)| solve(problem, options))
}
