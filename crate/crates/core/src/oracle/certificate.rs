//! Tilted-cost optimality certificate.
//!
//! A feasible `P` is optimal iff it solves the plain OT problem with cost
//! `S = C + sum_i lambda_i G_i` for some subgradient selection `G_i` at `P`.
//! The check fixes the canonical selection, so a failure only refutes
//! optimality when every subdifferential involved is a singleton.

use std::fmt;

use crate::error::{Error, Result};
use crate::oracle::network_simplex::exact_ot_lp;
use crate::polytope::marginal_error;
use crate::regmaps::MapImage;
use crate::schatten::RANK_CUTOFF;
use crate::solver::Problem;
use crate::{Matrix, Vector};

/// Candidates must be feasible to this level.
pub const CANDIDATE_FEASIBILITY: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    /// Failed, and the subgradient at the candidate is unique.
    Refuted,
    /// Failed, but another subgradient selection might still certify the candidate.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Passed => "passed",
            Verdict::Refuted => "refuted",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub tilted_cost: Matrix,
    pub lp_value: f64,
    /// `<S, P>`.
    pub candidate_value: f64,
    /// `candidate_value - lp_value`.
    pub gap: f64,
    pub dual_u: Vector,
    pub dual_v: Vector,
    pub passed: bool,
    pub verdict: Verdict,
    pub tol: f64,
    /// Objective at the candidate.
    pub objective: f64,
    /// `objective - gap`, a lower bound on the optimal value by convexity.
    pub lower_bound: f64,
}

impl CertificateReport {
    pub const CSV_HEADER: &'static str = "lambda,candidate_value,lp_value,gap,passed";

    pub fn csv_row(&self, lambda: f64) -> String {
        format!("{lambda},{:e},{:e},{:e},{}", self.candidate_value, self.lp_value, self.gap, self.passed)
    }

    pub fn to_text(&self) -> String {
        format!(
            "verdict: {}\ncandidate <S,P>: {:.12e}\ntilted LP value: {:.12e}\ngap: {:.3e} (tol {:.1e})\nobjective: {:.12e}\nlower bound: {:.12e}\n",
            self.verdict, self.candidate_value, self.lp_value, self.gap, self.tol, self.objective, self.lower_bound
        )
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// True when `|.|_{S_p}^q` has more than one subgradient at `image`.
fn subdifferential_is_set(image: &MapImage, p: f64, q: f64) -> Result<bool> {
    if image.is_zero() {
        return Ok(q == 1.0);
    }
    let sigma = image.singular_values()?;
    let top = sigma[0];
    if p == 1.0 {
        let (k, l) = image.shape();
        let full = k.min(l);
        let rank = sigma.iter().filter(|s| **s > RANK_CUTOFF * top).count();
        return Ok(rank < full);
    }
    if p == f64::INFINITY {
        return Ok(sigma.len() > 1 && sigma[1] >= top * (1.0 - 1e-9));
    }
    Ok(false)
}

pub fn kkt_certificate(problem: &Problem, candidate: &Matrix, tol: f64) -> Result<CertificateReport> {
    let err = marginal_error(candidate, &problem.a, &problem.b)?;
    if err > CANDIDATE_FEASIBILITY {
        return Err(Error::Argument(format!("candidate marginal error {err:e} exceeds {CANDIDATE_FEASIBILITY:e}")));
    }
    if candidate.iter().any(|x| *x < 0.0) {
        return Err(Error::Argument("candidate has negative entries".into()));
    }
    let tilted = &problem.cost.entries + problem.subgradient(candidate)?;
    let lp = exact_ot_lp(&tilted, &problem.a, &problem.b)?;
    let candidate_value = tilted.dot(candidate);
    let gap = candidate_value - lp.value;
    let passed = gap <= tol;
    let verdict = if passed {
        Verdict::Passed
    } else {
        let mut ambiguous = false;
        for t in problem.terms.iter().filter(|t| t.strength > 0.0) {
            let image = t.map.apply(candidate)?;
            ambiguous |= subdifferential_is_set(&image, t.schatten_p, t.exponent)?;
        }
        if ambiguous {
            Verdict::Inconclusive
        } else {
            Verdict::Refuted
        }
    };
    let objective = problem.objective(candidate)?;
    Ok(CertificateReport {
        tilted_cost: tilted,
        lp_value: lp.value,
        candidate_value,
        gap,
        dual_u: lp.dual_u,
        dual_v: lp.dual_v,
        passed,
        verdict,
        tol,
        objective,
        lower_bound: objective - gap,
    })
}
