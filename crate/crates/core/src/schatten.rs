//! Schatten norms, subgradients of `|M|_{S_p}^q` and effective rank.

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Relative cutoff below which singular values count as zero when `p < 2`.
pub const RANK_CUTOFF: f64 = 1e-12;

const SVD_EPS_LADDER: [f64; 3] = [1e-15, 1e-13, 1e-11];
const SVD_RESIDUAL_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 60;
const SVD_MAX_ITERS: usize = 0;

/// Thin SVD `M = U diag(sigma) V^T` with nonincreasing singular values.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        let top = self.singular_values.get(0).copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|s| **s > RANK_CUTOFF * top && **s > 0.0).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.singular_values.iter()) {
            col *= *s;
        }
        us * self.v.transpose()
    }
}

pub fn thin_svd(m: &Matrix) -> Result<SvdFactors> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite entries".into()));
    }
    let r = m.nrows().min(m.ncols());
    if r == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(m.nrows(), 0),
            singular_values: Vector::zeros(0),
            v: Matrix::zeros(m.ncols(), 0),
        });
    }
    // nalgebra occasionally returns an inconsistent factorization of nearly
    // rank-deficient inputs; every result is checked against the input and
    // one-sided Jacobi is the fallback.
    if m.nrows() < m.ncols() {
        let f = thin_svd(&m.transpose())?;
        return Ok(SvdFactors { u: f.v, singular_values: f.singular_values, v: f.u });
    }
    let scale = m.norm();
    let mut residual = f64::NAN;
    for eps in SVD_EPS_LADDER {
        let f = svd_once(m, eps)?;
        residual = (f.reconstruct() - m).norm();
        if residual <= SVD_RESIDUAL_TOL * scale {
            return Ok(f);
        }
    }
    let f = jacobi_svd(m);
    let fallback = (f.reconstruct() - m).norm();
    if fallback <= SVD_RESIDUAL_TOL * scale {
        return Ok(f);
    }
    Err(Error::Numerical(format!(
        "SVD reconstruction residual {:e} (matrix norm {scale:e})",
        residual.min(fallback)
    )))
}

/// One-sided Jacobi SVD of a tall matrix.
fn jacobi_svd(m: &Matrix) -> SvdFactors {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (x, y) = (a[(k, i)], a[(k, j)]);
                    a[(k, i)] = c * x - s * y;
                    a[(k, j)] = s * x + c * y;
                }
                for k in 0..cols {
                    let (x, y) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * x - s * y;
                    v[(k, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let mut u = Matrix::zeros(rows, cols);
    let mut filled = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        if sigma[src] > 0.0 {
            u.set_column(k, &(a.column(src) / sigma[src]));
            filled.push(k);
        }
    }
    // complete the left factor for zero singular values
    let mut basis = 0;
    for k in 0..cols {
        if filled.contains(&k) {
            continue;
        }
        while basis < rows {
            let mut e = Vector::zeros(rows);
            e[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&e);
                    e -= u.column(f) * proj;
                }
            }
            let n = e.norm();
            if n > 1e-8 {
                u.set_column(k, &(e / n));
                filled.push(k);
                break;
            }
        }
    }
    SvdFactors {
        u,
        singular_values: Vector::from_fn(cols, |k, _| sigma[order[k]]),
        v: Matrix::from_fn(cols, cols, |i, k| v[(i, order[k])]),
    }
}

fn svd_once(m: &Matrix, eps: f64) -> Result<SvdFactors> {
    let r = m.nrows().min(m.ncols());
    let svd = m
        .clone()
        .try_svd(true, true, eps, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("SVD failed to converge".into()))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let sigma = svd.singular_values;
    if sigma.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("SVD produced NaN singular values".into()));
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    Ok(SvdFactors {
        u: Matrix::from_fn(m.nrows(), r, |i, k| u[(i, order[k])]),
        singular_values: Vector::from_fn(r, |k, _| sigma[order[k]].max(0.0)),
        v: Matrix::from_fn(m.ncols(), r, |j, k| v_t[(order[k], j)]),
    })
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(Error::Argument(format!("Schatten exponent p must be positive, got {p}")));
    }
    Ok(())
}

/// `l_p` norm of a vector of absolute values; `p = inf` gives the max.
pub fn lp_norm(values: impl Iterator<Item = f64> + Clone, p: f64) -> Result<f64> {
    check_p(p)?;
    let max = values.clone().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if p == f64::INFINITY || max == 0.0 {
        return Ok(max);
    }
    if p == 1.0 {
        return Ok(values.map(f64::abs).sum());
    }
    // scaled to avoid overflow for large p
    let s: f64 = values.map(|x| (x.abs() / max).powf(p)).sum();
    Ok(max * s.powf(1.0 / p))
}

pub fn schatten_norm(m: &Matrix, p: f64) -> Result<f64> {
    check_p(p)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("matrix contains non-finite entries".into()));
    }
    if p == 2.0 {
        return Ok(m.norm());
    }
    let svd = thin_svd(m)?;
    lp_norm(svd.singular_values.iter().copied(), p)
}

fn check_convex(p: f64, q: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 || q.is_nan() || q < 1.0 || !q.is_finite() {
        return Err(Error::Unsupported(format!(
            "only convex exponents p >= 1, 1 <= q < inf are supported, got p = {p}, q = {q}"
        )));
    }
    Ok(())
}

/// Scaled spectral weights `q |sigma|_p^(q-1) (sigma_i / |sigma|_p)^(p-1)`.
///
/// Works on absolute values; the caller restores signs or singular vectors.
fn spectral_weights(sigma: &[f64], p: f64, q: f64) -> Result<Vec<f64>> {
    let norm = lp_norm(sigma.iter().copied(), p)?;
    let top = sigma.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
    if norm == 0.0 || top == 0.0 {
        return Ok(vec![0.0; sigma.len()]);
    }
    let scale = q * norm.powf(q - 1.0);
    if p == f64::INFINITY {
        // one maximal direction carries all the weight
        let k = sigma.iter().position(|s| s.abs() == top).unwrap_or(0);
        return Ok((0..sigma.len()).map(|i| if i == k { scale } else { 0.0 }).collect());
    }
    Ok(sigma
        .iter()
        .map(|s| {
            let s = s.abs();
            if p < 2.0 && s <= RANK_CUTOFF * top {
                0.0
            } else if p == 1.0 {
                scale
            } else {
                scale * (s / norm).powf(p - 1.0)
            }
        })
        .collect())
}

/// An element of the subdifferential of `M -> |M|_{S_p}^q`.
///
/// Returns the zero matrix at `M = 0`.
pub fn schatten_power_subgradient(m: &Matrix, p: f64, q: f64) -> Result<Matrix> {
    check_convex(p, q)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("subgradient input contains non-finite entries".into()));
    }
    if m.iter().all(|x| *x == 0.0) {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    if p == 2.0 {
        let fro = m.norm();
        return Ok(if q == 2.0 { m * 2.0 } else { m * (q * fro.powf(q - 2.0)) });
    }
    let svd = thin_svd(m)?;
    let w = spectral_weights(svd.singular_values.as_slice(), p, q)?;
    let mut uw = svd.u.clone();
    for (mut col, wk) in uw.column_iter_mut().zip(w.iter()) {
        col *= *wk;
    }
    Ok(uw * svd.v.transpose())
}

/// Subgradient of `|diag(v)|_{S_p}^q`, returned as a diagonal vector.
pub fn diagonal_power_subgradient(v: &Vector, p: f64, q: f64) -> Result<Vector> {
    check_convex(p, q)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("subgradient input contains non-finite entries".into()));
    }
    if p == 2.0 {
        let norm = v.norm();
        if norm == 0.0 {
            return Ok(Vector::zeros(v.len()));
        }
        return Ok(if q == 2.0 { v * 2.0 } else { v * (q * norm.powf(q - 2.0)) });
    }
    let w = spectral_weights(v.as_slice(), p, q)?;
    Ok(Vector::from_fn(v.len(), |i, _| w[i] * v[i].signum() * (v[i] != 0.0) as u8 as f64))
}

/// `|M|_{S_1} / |M|_{S_inf}`.
pub fn effective_rank(m: &Matrix) -> Result<f64> {
    let svd = thin_svd(m)?;
    effective_rank_of_values(svd.singular_values.iter().copied())
}

pub fn effective_rank_of_values(sigma: impl Iterator<Item = f64> + Clone) -> Result<f64> {
    let top = lp_norm(sigma.clone(), f64::INFINITY)?;
    if top == 0.0 {
        return Err(Error::Degenerate("effective rank of the zero matrix".into()));
    }
    Ok(lp_norm(sigma, 1.0)? / top)
}
