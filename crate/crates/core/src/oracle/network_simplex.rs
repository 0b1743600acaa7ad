//! Exact transportation LP by the transportation (network) simplex method.
//!
//! The basis is a spanning tree on the bipartite row/column graph, seeded by
//! the northwest corner rule. Pivots use Bland's rule: the lowest-index cell
//! with negative reduced cost enters, the lowest-index blocking cell leaves.

use std::collections::VecDeque;

use crate::error::{shape_check, Error, Result};
use crate::polytope::Coupling;
use crate::{Matrix, Vector};

/// Desk-scale guard on `m * n`.
pub const MAX_LP_CELLS: usize = 10_000;
/// Reduced costs above `-DUAL_TOL * (1 + max|C|)` count as nonnegative when certifying.
pub const DUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub coupling: Coupling,
    pub value: f64,
    pub dual_u: Vector,
    pub dual_v: Vector,
    pub pivots: usize,
}

impl LpSolution {
    /// `C_ij - u_i - v_j`.
    pub fn reduced_costs(&self, cost: &Matrix) -> Matrix {
        Matrix::from_fn(cost.nrows(), cost.ncols(), |i, j| cost[(i, j)] - self.dual_u[i] - self.dual_v[j])
    }
}

struct Tree {
    rows: usize,
    cols: usize,
    /// Basic cells `(i, j)`, kept sorted by `i * cols + j`.
    cells: Vec<(usize, usize)>,
}

impl Tree {
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // node ids: rows 0..m, columns m..m+n; entries are (neighbour, cell index)
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.rows + j, k));
            adj[self.rows + j].push((i, k));
        }
        adj
    }

    fn potentials(&self, c: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut u = vec![f64::NAN; self.rows];
        let mut v = vec![f64::NAN; self.cols];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        let mut seen = vec![false; self.rows + self.cols];
        seen[0] = true;
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[k];
                if next >= self.rows {
                    v[j] = c[(i, j)] - u[i];
                } else {
                    u[i] = c[(i, j)] - v[j];
                }
                queue.push_back(next);
            }
        }
        (u, v)
    }

    /// Cell indices on the tree path from column node `j` to row node `i`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let start = self.rows + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.rows + self.cols];
        let mut seen = vec![false; self.rows + self.cols];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = i;
        while node != start {
            let (prev, k) = parent[node].expect("basis is a spanning tree");
            out.push(k);
            node = prev;
        }
        out.reverse();
        out
    }

    /// Flows determined by the tree and the marginals, by peeling leaves.
    fn leaf_flows(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let adj = self.adjacency();
        let total = self.rows + self.cols;
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut removed = vec![false; self.cells.len()];
        let mut supply: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let mut flows = vec![0.0; self.cells.len()];
        let mut leaves: Vec<usize> = (0..total).filter(|&n| degree[n] == 1).collect();
        while let Some(node) = leaves.pop() {
            if degree[node] != 1 {
                continue;
            }
            let Some(&(other, k)) = adj[node].iter().find(|(_, k)| !removed[*k]) else {
                continue;
            };
            removed[k] = true;
            flows[k] = supply[node];
            supply[other] -= supply[node];
            degree[node] = 0;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        flows
    }
}

fn northwest_corner(a: &[f64], b: &[f64]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let (m, n) = (a.len(), b.len());
    let mut s = a.to_vec();
    let mut d = b.to_vec();
    let (mut i, mut j) = (0, 0);
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut flows = Vec::with_capacity(m + n - 1);
    loop {
        let x = s[i].min(d[j]).max(0.0);
        cells.push((i, j));
        flows.push(x);
        s[i] -= x;
        d[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    (cells, flows)
}

fn solve_reduced(c: &Matrix, a: &[f64], b: &[f64]) -> Result<(Matrix, Vec<f64>, Vec<f64>, usize)> {
    let (m, n) = (a.len(), b.len());
    let (cells, mut flows) = northwest_corner(a, b);
    let mut tree = Tree { rows: m, cols: n, cells };
    let scale = 1.0 + c.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let enter_tol = 1e-12 * scale;
    let cap = 50 * (m + n) * (m + n) + 1000;
    let mut basic = vec![false; m * n];
    for &(i, j) in &tree.cells {
        basic[i * n + j] = true;
    }
    let mut pivots = 0;
    loop {
        let (u, v) = tree.potentials(c);
        let entering = (0..m * n).find(|&k| !basic[k] && c[(k / n, k % n)] - u[k / n] - v[k % n] < -enter_tol);
        let Some(k) = entering else {
            let flows = tree.leaf_flows(a, b);
            let mut plan = Matrix::zeros(m, n);
            for (&(i, j), f) in tree.cells.iter().zip(flows) {
                plan[(i, j)] = f.max(0.0);
            }
            return Ok((plan, u, v, pivots));
        };
        pivots += 1;
        if pivots > cap {
            return Err(Error::Numerical(format!("transportation simplex exceeded {cap} pivots")));
        }
        let (ei, ej) = (k / n, k % n);
        let path = tree.path(ei, ej);
        // path cells alternate -, +, -, ... starting from the entering column
        let theta = path.iter().step_by(2).map(|&p| flows[p]).fold(f64::INFINITY, f64::min).max(0.0);
        let leave = path
            .iter()
            .step_by(2)
            .copied()
            .filter(|&p| flows[p] <= theta)
            .min_by_key(|&p| tree.cells[p].0 * n + tree.cells[p].1)
            .expect("cycle has a blocking cell");
        for (pos, &p) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flows[p] -= theta;
            } else {
                flows[p] += theta;
            }
        }
        let (li, lj) = tree.cells[leave];
        basic[li * n + lj] = false;
        basic[k] = true;
        tree.cells[leave] = (ei, ej);
        flows[leave] = theta;
        let mut order: Vec<usize> = (0..tree.cells.len()).collect();
        order.sort_by_key(|&p| tree.cells[p].0 * n + tree.cells[p].1);
        tree.cells = order.iter().map(|&p| tree.cells[p]).collect();
        flows = order.iter().map(|&p| flows[p]).collect();
    }
}

/// Exact minimum of `<C, P>` over `U(a, b)`.
///
/// Rows and columns with zero mass are removed before solving; their duals
/// are filled in afterwards so that `C - u 1^T - 1 v^T >= 0` still holds.
pub fn exact_ot_lp(cost: &Matrix, a: &Vector, b: &Vector) -> Result<LpSolution> {
    let (m, n) = cost.shape();
    shape_check(a.len() == m && b.len() == n, || {
        format!("cost is {m}x{n} but marginals have lengths {} and {}", a.len(), b.len())
    })?;
    if m * n > MAX_LP_CELLS {
        return Err(Error::Capacity(format!("exact LP limited to {MAX_LP_CELLS} cells, got {m}x{n}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput("empty transportation problem".into()));
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("cost contains non-finite entries".into()));
    }
    if a.iter().chain(b.iter()).any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Argument("marginals must be finite and nonnegative".into()));
    }
    let (sa, sb) = (a.sum(), b.sum());
    if !(sa > 0.0) || (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(Error::Argument(format!("marginal masses differ: {sa} vs {sb}")));
    }

    let rows: Vec<usize> = (0..m).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| b[j] > 0.0).collect();
    let sub = Matrix::from_fn(rows.len(), cols.len(), |r, c| cost[(rows[r], cols[c])]);
    let ra: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let rb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let (sub_plan, su, sv, pivots) = solve_reduced(&sub, &ra, &rb)?;

    let mut plan = Matrix::zeros(m, n);
    let mut u = Vector::from_element(m, f64::NAN);
    let mut v = Vector::from_element(n, f64::NAN);
    for (r, &i) in rows.iter().enumerate() {
        u[i] = su[r];
        for (c, &j) in cols.iter().enumerate() {
            plan[(i, j)] = sub_plan[(r, c)];
        }
    }
    for (c, &j) in cols.iter().enumerate() {
        v[j] = sv[c];
    }
    for i in (0..m).filter(|&i| a[i] == 0.0) {
        u[i] = cols.iter().map(|&j| cost[(i, j)] - v[j]).fold(f64::INFINITY, f64::min);
    }
    for j in (0..n).filter(|&j| b[j] == 0.0) {
        v[j] = (0..m).map(|i| cost[(i, j)] - u[i]).fold(f64::INFINITY, f64::min);
    }

    let scale = 1.0 + cost.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    for i in 0..m {
        for j in 0..n {
            let r = cost[(i, j)] - u[i] - v[j];
            if r < -DUAL_TOL * scale || (plan[(i, j)] > 0.0 && r.abs() > DUAL_TOL * scale) {
                return Err(Error::Numerical(format!("LP certificate failed at ({i}, {j}): reduced cost {r:e}")));
            }
        }
    }
    let value = cost.dot(&plan);
    Ok(LpSolution {
        coupling: Coupling { plan, row_marginal: a.clone(), col_marginal: b.clone() },
        value,
        dual_u: u,
        dual_v: v,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::seeded_rng;
    use rand::Rng;

    fn uniform(k: usize) -> Vector {
        Vector::from_element(k, 1.0 / k as f64)
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force(c: &Matrix) -> f64 {
        let n = c.nrows();
        permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_by_two() {
        let c = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = exact_ot_lp(&c, &uniform(2), &uniform(2)).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.coupling.plan, Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn single_row_is_forced() {
        let c = Matrix::from_row_slice(1, 3, &[2.0, 5.0, 1.0]);
        let b = Vector::from_column_slice(&[0.2, 0.3, 0.5]);
        let s = exact_ot_lp(&c, &Vector::from_element(1, 1.0), &b).unwrap();
        assert_eq!(s.coupling.plan.row(0).transpose(), b);
        assert!((s.value - (0.4 + 1.5 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn permutation_brute_force() {
        let mut rng = seeded_rng(42);
        for n in [4, 5] {
            for _ in 0..100 {
                let c = Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..10.0));
                let s = exact_ot_lp(&c, &uniform(n), &uniform(n)).unwrap();
                assert!((s.value - brute_force(&c)).abs() <= 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn duals_certify_optimality() {
        let mut rng = seeded_rng(7);
        for _ in 0..50 {
            let (m, n) = (rng.random_range(1..9), rng.random_range(1..9));
            let c = Matrix::from_fn(m, n, |_, _| rng.random_range(0.0..3.0));
            let mut a = Vector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
            let mut b = Vector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            if m > 2 {
                a[1] = 0.0;
            }
            a /= a.sum();
            b /= b.sum();
            let s = exact_ot_lp(&c, &a, &b).unwrap();
            let r = s.reduced_costs(&c);
            assert!(s.coupling.marginal_error() < 1e-12);
            for i in 0..m {
                for j in 0..n {
                    assert!(r[(i, j)] >= -1e-9);
                    if s.coupling.plan[(i, j)] > 0.0 {
                        assert!(r[(i, j)].abs() <= 1e-9);
                    }
                }
            }
            // strong duality
            assert!((s.value - (a.dot(&s.dual_u) + b.dot(&s.dual_v))).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_ties_terminate() {
        // all-equal costs and integer-like masses create many degenerate pivots
        let c = Matrix::from_fn(6, 6, |i, j| ((i + j) % 3) as f64);
        let s = exact_ot_lp(&c, &uniform(6), &uniform(6)).unwrap();
        assert!(s.value.abs() < 1e-15);
    }

    #[test]
    fn guards() {
        let c = Matrix::zeros(101, 100);
        assert!(matches!(exact_ot_lp(&c, &uniform(101), &uniform(100)), Err(Error::Capacity(_))));
        let c = Matrix::zeros(2, 2);
        assert!(matches!(exact_ot_lp(&c, &uniform(3), &uniform(2)), Err(Error::Shape(_))));
    }
}
