//! Solution-quality measurements.

use crate::error::{Error, Result};
use crate::polytope::marginal_error;
use crate::schatten::effective_rank;
use crate::solver::Problem;
use crate::Matrix;

/// Entries above this count towards the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
/// Couplings passed to [`evaluate`] must be feasible to this level.
pub const EVALUATE_FEASIBILITY: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub transport_cost: f64,
    pub effective_rank_coupling: f64,
    /// Effective rank of the first term's map image, if there is a term and its image is nonzero.
    pub effective_rank_map_image: Option<f64>,
    /// One entry per term; `None` when that image is zero.
    pub term_effective_ranks: Vec<Option<f64>>,
    pub marginal_error: f64,
    pub support_size: usize,
}

impl QualityReport {
    pub const CSV_HEADER: &'static str = "instance_id,lambda,p,q,map_kind,transport_cost,effective_rank_coupling,effective_rank_map_image,marginal_error,support_size";

    pub fn csv_row(&self, instance_id: &str, lambda: f64, p: f64, q: f64, map_kind: &str) -> String {
        let image = self.effective_rank_map_image.map(|r| format!("{r:.12}")).unwrap_or_default();
        format!(
            "{instance_id},{lambda},{p},{q},{map_kind},{:.12e},{:.12},{image},{:e},{}",
            self.transport_cost, self.effective_rank_coupling, self.marginal_error, self.support_size
        )
    }
}

/// Quality of a coupling that is feasible to [`EVALUATE_FEASIBILITY`].
pub fn evaluate(problem: &Problem, p: &Matrix) -> Result<QualityReport> {
    let err = marginal_error(p, &problem.a, &problem.b)?;
    if err > EVALUATE_FEASIBILITY {
        return Err(Error::Argument(format!("coupling marginal error {err:e} exceeds {EVALUATE_FEASIBILITY:e}")));
    }
    evaluate_unchecked(problem, p)
}

/// Same as [`evaluate`] without the feasibility requirement.
pub fn evaluate_unchecked(problem: &Problem, p: &Matrix) -> Result<QualityReport> {
    if p.iter().all(|x| *x == 0.0) {
        return Err(Error::Degenerate("zero coupling".into()));
    }
    let transport_cost = problem.transport_cost(p)?;
    let effective_rank_coupling = effective_rank(p)?;
    let mut term_effective_ranks = Vec::with_capacity(problem.terms.len());
    for t in &problem.terms {
        let image = t.map.apply(p)?;
        term_effective_ranks.push(if image.is_zero() { None } else { Some(image.effective_rank()?) });
    }
    Ok(QualityReport {
        transport_cost,
        effective_rank_coupling,
        effective_rank_map_image: term_effective_ranks.first().copied().flatten(),
        term_effective_ranks,
        marginal_error: marginal_error(p, &problem.a, &problem.b)?,
        support_size: p.iter().filter(|x| **x > SUPPORT_THRESHOLD).count(),
    })
}

/// Least-squares slope of `ln y` against `ln x`. Nonpositive values are skipped.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{gen_clustered_instance, gen_symmetric_pairs_instance, ClusteredSpec, SymmetricPairsSpec, TargetMode};
    use crate::regmaps::{AffineCouplingMap, MapKind, RegularizerTerm};
    use crate::oracle::exact_ot_lp;
    use approx::assert_abs_diff_eq;

    fn clustered(radius: f64) -> crate::measures::ClusteredInstance {
        gen_clustered_instance(&ClusteredSpec {
            group_size: 5,
            source_centers: vec![vec![-2.0, 2.0], vec![-2.0, -2.0], vec![-6.0, 0.0]],
            target_centers: vec![vec![2.0, 2.0], vec![2.0, -2.0], vec![-10.0, 0.0]],
            radius,
            mode: TargetMode::Exact,
            seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn product_coupling_has_rank_one() {
        let inst = clustered(0.2);
        let prob = Problem::from_measures(&inst.source, &inst.target, Vec::new()).unwrap();
        let p = &prob.a * prob.b.transpose();
        let r = evaluate(&prob, &p).unwrap();
        assert_abs_diff_eq!(r.effective_rank_coupling, 1.0, epsilon = 1e-12);
        assert_eq!(r.support_size, 15 * 15);
        assert_eq!(r.effective_rank_map_image, None);
    }

    #[test]
    fn block_ground_truth_has_rank_r_and_matching_cost() {
        for radius in [0.0, 0.3] {
            let inst = clustered(radius);
            let n = 15;
            let prob = Problem::from_measures(
                &inst.source,
                &inst.target,
                vec![RegularizerTerm::new(1.0, 1.0, 1.0, AffineCouplingMap::identity(n, n)).unwrap()],
            )
            .unwrap();
            let r = evaluate(&prob, &inst.ground_truth.plan).unwrap();
            assert_abs_diff_eq!(r.effective_rank_coupling, 3.0, epsilon = 1e-12);
            assert_eq!(r.effective_rank_map_image, Some(r.effective_rank_coupling));
            // any within-cluster matching costs the same
            let matching = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 / n as f64 } else { 0.0 });
            assert_abs_diff_eq!(r.transport_cost, prob.transport_cost(&matching).unwrap(), epsilon = 1e-10);
            let lp = exact_ot_lp(&prob.cost.entries, &prob.a, &prob.b).unwrap();
            assert_abs_diff_eq!(r.transport_cost, lp.value, epsilon = 1e-10);
        }
    }

    #[test]
    fn equal_split_has_rank_one_displacement() {
        let inst = gen_symmetric_pairs_instance(&SymmetricPairsSpec {
            cluster_sizes: vec![4, 5, 3],
            scalars: vec![0.0, 5.0, 10.0],
            epsilon: 0.5,
            radius: 1.0,
            dim: 3,
            seed: 2,
        })
        .unwrap();
        let map = AffineCouplingMap::new(MapKind::BarycentricDisplacement, &inst.source, &inst.target, None).unwrap();
        let prob = Problem::from_measures(&inst.source, &inst.target, vec![RegularizerTerm::new(1.0, 1.0, 1.0, map).unwrap()])
            .unwrap();
        let r = evaluate(&prob, &inst.ground_truth.plan).unwrap();
        assert_abs_diff_eq!(r.effective_rank_map_image.unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn scale_consistency_and_errors() {
        let inst = clustered(0.1);
        let prob = Problem::from_measures(&inst.source, &inst.target, Vec::new()).unwrap();
        let p = &inst.ground_truth.plan;
        let base = evaluate_unchecked(&prob, p).unwrap();
        let scaled = evaluate_unchecked(&prob, &(p * 3.5)).unwrap();
        assert_abs_diff_eq!(base.effective_rank_coupling, scaled.effective_rank_coupling, epsilon = 1e-12);
        assert!(evaluate(&prob, &(p * 3.5)).is_err());
        assert!(matches!(evaluate_unchecked(&prob, &(p * 0.0)), Err(Error::Degenerate(_))));
        let row = base.csv_row("inst", 0.5, 1.0, 1.0, "identity");
        assert_eq!(row.split(',').count(), QualityReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..50).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        assert_abs_diff_eq!(loglog_slope(&xs, &ys).unwrap(), -0.5, epsilon = 1e-12);
        assert_eq!(loglog_slope(&[1.0], &[1.0]), None);
    }
}
