//! Brute-force minimization of separable scalar problems on `[0, 1]`.

/// One scalar objective on `[0, 1]` and the points where its slope changes.
pub struct ScalarProblem {
    objective: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
}

impl ScalarProblem {
    pub fn new(objective: impl Fn(f64) -> f64 + Send + Sync + 'static, breakpoints: Vec<f64>) -> Self {
        Self { objective: Box::new(objective), breakpoints }
    }

    /// `phi(m) = -2 sqrt(ab) m + lambda |m sqrt(b) - sqrt(a)|` for eigenvalues `a` of the
    /// source and `b` of the target covariance.
    pub fn displacement(a: f64, b: f64, lambda: f64) -> Self {
        let (sa, sb) = (a.sqrt(), b.sqrt());
        Self::new(move |m| -2.0 * sa * sb * m + lambda * (m * sb - sa).abs(), vec![(a / b).sqrt()])
    }

    /// `(lambda - 2 sigma) s`, the per-direction cross-covariance objective.
    pub fn cross_covariance(sigma: f64, lambda: f64) -> Self {
        Self::new(move |s| (lambda - 2.0 * sigma) * s, Vec::new())
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.objective)(x)
    }
}

/// Scans each problem on `grid_points` uniform points of `[0, 1]` plus its
/// breakpoints inside the interval and returns the smallest minimizer found.
pub fn separable_grid_oracle(problems: &[ScalarProblem], grid_points: usize) -> Vec<f64> {
    let n = grid_points.max(2);
    problems
        .iter()
        .map(|p| {
            let mut xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
            xs.extend(p.breakpoints.iter().copied().filter(|x| (0.0..=1.0).contains(x)));
            xs.sort_by(f64::total_cmp);
            let mut best = (f64::INFINITY, 0.0);
            for x in xs {
                let v = p.eval(x);
                if v < best.0 {
                    best = (v, x);
                }
            }
            best.1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contracting_direction_keeps_full_coupling() {
        let m = separable_grid_oracle(&[ScalarProblem::displacement(4.0, 1.0, 3.0)], 10_001);
        assert_eq!(m, vec![1.0]);
    }

    #[test]
    fn expanding_direction_snaps_to_breakpoint() {
        // b > a and lambda >= 2 sqrt(a) = 2
        let m = separable_grid_oracle(&[ScalarProblem::displacement(1.0, 3.0, 2.5)], 10_001);
        assert!((m[0] - (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
        let m = separable_grid_oracle(&[ScalarProblem::displacement(1.0, 3.0, 1.5)], 10_001);
        assert_eq!(m, vec![1.0]);
    }

    #[test]
    fn zero_penalty_always_picks_one() {
        let problems: Vec<_> = [(1.0, 2.0), (2.0, 1.0), (0.5, 0.5)]
            .iter()
            .map(|&(a, b)| ScalarProblem::displacement(a, b, 0.0))
            .collect();
        assert_eq!(separable_grid_oracle(&problems, 101), vec![1.0; 3]);
    }

    #[test]
    fn cross_covariance_threshold() {
        let m = separable_grid_oracle(
            &[ScalarProblem::cross_covariance(1.0, 1.0), ScalarProblem::cross_covariance(1.0, 3.0)],
            11,
        );
        assert_eq!(m, vec![1.0, 0.0]);
    }
}
