//! Couplings, Sinkhorn KL projection onto `U(a, b)` and exact rounding.

use std::io::Write;

use crate::error::{shape_check, Error, Result};
use crate::{Matrix, Vector};

/// Entries are floored here before taking logarithms.
pub const ENTRY_FLOOR: f64 = 1e-300;
pub const DEFAULT_SINKHORN_ITERS: usize = 500;
pub const DEFAULT_SINKHORN_TOL: f64 = 1e-12;
/// Marginal error under which a coupling counts as feasible.
pub const FEASIBLE_TOL: f64 = 1e-9;

/// A nonnegative plan together with the marginals it is meant to match.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub plan: Matrix,
    pub row_marginal: Vector,
    pub col_marginal: Vector,
}

impl Coupling {
    pub fn new(plan: Matrix, row_marginal: Vector, col_marginal: Vector) -> Result<Self> {
        check_shapes(&plan, &row_marginal, &col_marginal)?;
        if let Some(x) = plan.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::Argument(format!("coupling entries must be finite and nonnegative, got {x}")));
        }
        Ok(Self { plan, row_marginal, col_marginal })
    }

    /// The independent coupling `a b^T`.
    pub fn product(a: &Vector, b: &Vector) -> Self {
        Self { plan: a * b.transpose(), row_marginal: a.clone(), col_marginal: b.clone() }
    }

    pub fn nrows(&self) -> usize {
        self.plan.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.plan.ncols()
    }

    pub fn marginal_error(&self) -> f64 {
        marginal_error_unchecked(&self.plan, &self.row_marginal, &self.col_marginal)
    }

    pub fn is_feasible(&self) -> bool {
        self.marginal_error() <= FEASIBLE_TOL
    }

    /// Dense row-major CSV preceded by a `# rows=m cols=n` comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# rows={} cols={}", self.nrows(), self.ncols())?;
        for i in 0..self.nrows() {
            let row: Vec<String> = (0..self.ncols()).map(|j| format!("{:e}", self.plan[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_shapes(p: &Matrix, a: &Vector, b: &Vector) -> Result<()> {
    shape_check(p.nrows() == a.len() && p.ncols() == b.len(), || {
        format!("plan is {}x{} but marginals have lengths {} and {}", p.nrows(), p.ncols(), a.len(), b.len())
    })
}

fn marginal_error_unchecked(p: &Matrix, a: &Vector, b: &Vector) -> f64 {
    let rows: f64 = p.row_iter().zip(a.iter()).map(|(r, ai)| (r.sum() - ai).abs()).sum();
    let cols: f64 = p.column_iter().zip(b.iter()).map(|(c, bj)| (c.sum() - bj).abs()).sum();
    rows + cols
}

/// `|P 1 - a|_1 + |P^T 1 - b|_1`.
pub fn marginal_error(p: &Matrix, a: &Vector, b: &Vector) -> Result<f64> {
    check_shapes(p, a, b)?;
    Ok(marginal_error_unchecked(p, a, b))
}

/// Output of a KL projection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub coupling: Coupling,
    /// Number of full row+column sweeps performed.
    pub iterations: usize,
    pub marginal_error: f64,
    /// Log column scaling `g` with `plan = exp(log_m + f 1^T + 1 g^T)`.
    pub col_potential: Vector,
}

fn check_marginal(v: &Vector, name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::EmptyInput(format!("marginal {name} is empty")));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Argument(format!("marginal {name}[{i}] = {x} must be positive")));
    }
    Ok(())
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// KL projection of a positive matrix onto `U(a, b)` by Sinkhorn scaling.
pub fn kl_project(m: &Matrix, a: &Vector, b: &Vector, max_iter: usize, tol: f64) -> Result<Projection> {
    check_shapes(m, a, b)?;
    if let Some(x) = m.iter().find(|x| x.is_nan() || **x < 0.0) {
        return Err(Error::Argument(format!("matrix to project has entry {x}")));
    }
    let log_m = m.map(|x| x.max(ENTRY_FLOOR).ln());
    kl_project_log(&log_m, a, b, max_iter, tol)
}

/// Same as [`kl_project`] but takes `ln M` directly, so that tilted updates
/// never leave the log domain.
pub fn kl_project_log(log_m: &Matrix, a: &Vector, b: &Vector, max_iter: usize, tol: f64) -> Result<Projection> {
    kl_project_log_warm(log_m, a, b, None, max_iter, tol)
}

/// [`kl_project_log`] starting from a column potential, usually the one
/// returned by the previous projection of a nearby matrix.
pub fn kl_project_log_warm(
    log_m: &Matrix,
    a: &Vector,
    b: &Vector,
    col_potential: Option<&Vector>,
    max_iter: usize,
    tol: f64,
) -> Result<Projection> {
    check_shapes(log_m, a, b)?;
    check_marginal(a, "a")?;
    check_marginal(b, "b")?;
    if log_m.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::Numerical("non-finite entry in matrix to project (iteration 0)".into()));
    }
    let floor = ENTRY_FLOOR.ln();
    let log_m = log_m.map(|x| x.max(floor));
    let (rows, cols) = log_m.shape();
    let ln_a = a.map(f64::ln);
    let ln_b = b.map(f64::ln);
    let mut f = Vector::zeros(rows);
    let mut g = match col_potential {
        Some(g) if g.len() == cols && g.iter().all(|x| x.is_finite()) => g.clone(),
        Some(g) if g.len() != cols => return Err(Error::Shape(format!("column potential has length {}, expected {cols}", g.len()))),
        _ => Vector::zeros(cols),
    };
    let mut row_lse = Vector::zeros(rows);
    let mut iterations = 0;
    let materialize = |f: &Vector, g: &Vector| Matrix::from_fn(rows, cols, |i, j| (log_m[(i, j)] + f[i] + g[j]).exp());
    let mut done: Option<(Matrix, f64)> = None;

    for it in 1..=max_iter.max(1) + 1 {
        for i in 0..rows {
            row_lse[i] = log_sum_exp((0..cols).map(|j| log_m[(i, j)] + g[j]));
        }
        if it > 1 {
            // columns are exact after the last sweep, so the row defect is the error
            let err: f64 = (0..rows).map(|i| ((f[i] + row_lse[i]).exp() - a[i]).abs()).sum();
            if err.is_nan() {
                return Err(Error::Numerical(format!("NaN marginal error at Sinkhorn iteration {}", it - 1)));
            }
            let capped = it > max_iter.max(1);
            if err <= tol || capped {
                // the estimate can sit a few ulps below the error of the materialized plan
                let plan = materialize(&f, &g);
                let exact = marginal_error_unchecked(&plan, a, b);
                if exact <= tol || capped {
                    done = Some((plan, exact));
                    break;
                }
            }
        }
        iterations = it;
        for i in 0..rows {
            f[i] = ln_a[i] - row_lse[i];
        }
        for j in 0..cols {
            g[j] = ln_b[j] - log_sum_exp((0..rows).map(|i| log_m[(i, j)] + f[i]));
        }
        if f.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite Sinkhorn potential at iteration {it}")));
        }
    }
    let (plan, err) = done.expect("the loop always ends through the cap check");
    Ok(Projection {
        coupling: Coupling { plan, row_marginal: a.clone(), col_marginal: b.clone() },
        iterations,
        marginal_error: err,
        col_potential: g,
    })
}

/// Entropic OT plan `argmin <C,P> - eps H(P)` computed by log-domain Sinkhorn.
pub fn sinkhorn_plan(cost: &Matrix, a: &Vector, b: &Vector, eps: f64, max_iter: usize, tol: f64) -> Result<Projection> {
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("entropic regularization must be positive, got {eps}")));
    }
    kl_project_log(&cost.map(|c| -c / eps), a, b, max_iter, tol)
}

/// Moves a nonnegative matrix into `U(a, b)`: shrink rows, shrink columns,
/// then add a rank-one correction for the remaining deficits.
pub fn round_to_polytope(p: &Matrix, a: &Vector, b: &Vector) -> Result<Coupling> {
    check_shapes(p, a, b)?;
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Argument(format!("cannot round matrix with entry {x}")));
    }
    if p.iter().all(|x| *x == 0.0) {
        return Err(Error::Degenerate("cannot round the zero matrix".into()));
    }
    let mut x = p.clone();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        let r = row.sum();
        if r > a[i] {
            row *= a[i] / r;
        }
    }
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let c = col.sum();
        if c > b[j] {
            col *= b[j] / c;
        }
    }
    let err_a = Vector::from_fn(a.len(), |i, _| (a[i] - x.row(i).sum()).max(0.0));
    let err_b = Vector::from_fn(b.len(), |j, _| (b[j] - x.column(j).sum()).max(0.0));
    let norm = err_a.sum();
    if norm > 0.0 {
        x += (&err_a * err_b.transpose()) / norm;
    }
    Ok(Coupling { plan: x, row_marginal: a.clone(), col_marginal: b.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn kl(q: &Matrix, p: &Matrix) -> f64 {
        q.iter()
            .zip(p.iter())
            .map(|(&qi, &pi)| if qi > 0.0 { qi * (qi / pi).ln() - qi + pi } else { pi })
            .sum()
    }

    #[test]
    fn marginal_error_examples() {
        let a = v(&[0.5, 0.5]);
        let p = &a * a.transpose();
        assert_eq!(marginal_error(&p, &a, &a).unwrap(), 0.0);
        // rows sum to 1 instead of 0.5: 2 * 0.5 + 2 * 0.5
        assert_abs_diff_eq!(marginal_error(&(p * 2.0), &a, &a).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(marginal_error(&Matrix::zeros(2, 2), &a, &a).unwrap(), 2.0);
        assert!(matches!(marginal_error(&Matrix::zeros(3, 2), &a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_fixed_point() {
        let a = v(&[0.3, 0.7]);
        let b = v(&[0.6, 0.4]);
        let p = m(&[&[0.2, 0.1], &[0.4, 0.3]]);
        let out = kl_project(&p, &a, &b, 500, 1e-12).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.marginal_error <= 1e-15);
        assert!((out.coupling.plan - p).abs().max() < 1e-15);
    }

    #[test]
    fn projection_of_rank_one_is_product() {
        let u = v(&[1.0, 2.0, 5.0]);
        let w = v(&[0.5, 3.0]);
        let a = v(&[0.2, 0.3, 0.5]);
        let b = v(&[0.9, 0.1]);
        let out = kl_project(&(&u * w.transpose()), &a, &b, 500, 1e-14).unwrap();
        assert!((out.coupling.plan - &a * b.transpose()).abs().max() < 1e-15);
    }

    #[test]
    fn projection_rejects_bad_marginals() {
        let p = Matrix::from_element(2, 2, 1.0);
        assert!(matches!(kl_project(&p, &v(&[1.0, 0.0]), &v(&[0.5, 0.5]), 10, 1e-12), Err(Error::Argument(_))));
        assert!(matches!(kl_project(&p, &v(&[1.0]), &v(&[0.5, 0.5]), 10, 1e-12), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_survives_underflow() {
        // exp(-800) underflows to zero; the floor keeps scaling alive.
        let p = m(&[&[1.0, (-800f64).exp()], &[(-800f64).exp(), 1.0]]);
        let a = v(&[0.5, 0.5]);
        let b = v(&[0.9, 0.1]);
        let out = kl_project(&p, &a, &b, 2000, 1e-12).unwrap();
        assert!(out.coupling.plan.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rounding_hand_example() {
        let a = v(&[0.5, 0.5]);
        let p = m(&[&[0.6, 0.0], &[0.0, 0.4]]);
        // row 0 scaled by 5/6 -> [0.5, 0]; columns (0.5, 0.4) already within b;
        // deficits err_a = err_b = (0, 0.1) so the correction adds 0.1 at (1,1).
        let out = round_to_polytope(&p, &a, &a).unwrap();
        let expected = m(&[&[0.5, 0.0], &[0.0, 0.5]]);
        assert!((out.plan - expected).abs().max() < 1e-16);
    }

    #[test]
    fn rounding_zero_row_and_zero_matrix() {
        let a = v(&[0.5, 0.5]);
        let p = m(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let out = round_to_polytope(&p, &a, &a).unwrap();
        assert!(out.marginal_error() < 1e-15);
        assert!(out.plan.iter().all(|x| *x >= 0.0));
        assert!(matches!(round_to_polytope(&Matrix::zeros(2, 2), &a, &a), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rounding_leaves_feasible_unchanged() {
        let a = v(&[0.25, 0.75]);
        let b = v(&[0.5, 0.5]);
        let p = m(&[&[0.125, 0.125], &[0.375, 0.375]]);
        assert_eq!(round_to_polytope(&p, &a, &b).unwrap().plan, p);
    }

    #[test]
    fn csv_header_and_rows() {
        let c = Coupling::product(&v(&[0.5, 0.5]), &v(&[0.25, 0.75]));
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# rows=2 cols=2");
        let row: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.125, 0.375]);
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(0.05f64..1.0, n).prop_map(|w| {
            let s: f64 = w.iter().sum();
            Vector::from_iterator(w.len(), w.into_iter().map(|x| x / s))
        })
    }

    fn instance() -> impl Strategy<Value = (Matrix, Vector, Vector)> {
        (2usize..6, 2usize..6).prop_flat_map(|(r, c)| {
            (
                prop::collection::vec(0.01f64..10.0, r * c).prop_map(move |e| Matrix::from_vec(r, c, e)),
                simplex(r),
                simplex(c),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_feasible_and_idempotent((p, a, b) in instance()) {
            let once = kl_project(&p, &a, &b, 5000, 1e-13).unwrap();
            prop_assert!(once.marginal_error <= 1e-13);
            let twice = kl_project(&once.coupling.plan, &a, &b, 5000, 1e-13).unwrap();
            prop_assert!((&twice.coupling.plan - &once.coupling.plan).abs().max() <= 1e-12);
        }

        #[test]
        fn projection_minimizes_kl((p, a, b) in instance(), t in 0.0f64..1.0) {
            let out = kl_project(&p, &a, &b, 20000, 1e-14).unwrap();
            // a feasible competitor: mix of the product coupling and a rounded perturbation
            let q0 = &a * b.transpose();
            let q1 = round_to_polytope(&p, &a, &b).unwrap().plan;
            let q = &q0 * t + &q1 * (1.0 - t);
            prop_assert!(kl(&out.coupling.plan, &p) <= kl(&q, &p) + 1e-8);
        }

        #[test]
        fn rounding_is_feasible_and_close((p, a, b) in instance(), zero_row in any::<bool>()) {
            let mut p = p / 20.0;
            if zero_row {
                p.row_mut(0).fill(0.0);
            }
            let err = marginal_error(&p, &a, &b).unwrap();
            let out = round_to_polytope(&p, &a, &b).unwrap();
            prop_assert!(out.plan.iter().all(|x| *x >= 0.0));
            prop_assert!(out.marginal_error() <= 1e-12 * p.nrows().max(p.ncols()) as f64);
            let moved: f64 = (&out.plan - &p).abs().sum();
            prop_assert!(moved <= 2.0 * err + 1e-12);
        }
    }
}
