//! Closed-form Schatten OT between centered Gaussians.
//!
//! A Gaussian coupling of `N(0, S0)` and `N(0, S1)` is described by its
//! cross-covariance `K`, feasible iff `|S0^{-1/2} K S1^{-1/2}|_2 <= 1`. Writing
//! `M = S0^{-1/2} K S1^{-1/2}`, the nuclear-penalized problem
//! `tr S0 + tr S1 - 2 tr K + lambda |M|_{S_1}` is solved by hard thresholding
//! the spectrum of `S0^{1/2} S1^{1/2}` at `lambda / 2`. For commuting pairs the
//! barycentric-displacement problem splits into scalar problems per eigendirection.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_check, Error, Result};
use crate::measures::seeded_rng;
use crate::par::{self, Execution};
use crate::schatten::{schatten_norm, thin_svd};
use crate::{Matrix, Vector};

/// Slack on the operator-norm feasibility test.
pub const FEASIBILITY_SLACK: f64 = 1e-9;
/// Relative commutator size under which a pair counts as commuting.
pub const COMMUTATION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPair {
    pub sigma0: Matrix,
    pub sigma1: Matrix,
}

fn check_spd(s: &Matrix, name: &str) -> Result<()> {
    if !s.is_square() || s.nrows() == 0 {
        return Err(Error::Shape(format!("{name} must be a nonempty square matrix")));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument(format!("{name} has non-finite entries")));
    }
    if (s - s.transpose()).abs().max() > 1e-10 * (1.0 + s.abs().max()) {
        return Err(Error::Argument(format!("{name} is not symmetric")));
    }
    let min = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Argument(format!("{name} is not positive definite (min eigenvalue {min:e})")));
    }
    Ok(())
}

fn sym_power(s: &Matrix, power: f64) -> Matrix {
    let eig = SymmetricEigen::new(s.clone());
    let d = eig.eigenvalues.map(|l| l.max(0.0).powf(power));
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

impl GaussianPair {
    pub fn new(sigma0: Matrix, sigma1: Matrix) -> Result<Self> {
        check_spd(&sigma0, "sigma0")?;
        check_spd(&sigma1, "sigma1")?;
        shape_check(sigma0.shape() == sigma1.shape(), || {
            format!("covariances have shapes {:?} and {:?}", sigma0.shape(), sigma1.shape())
        })?;
        Ok(Self { sigma0, sigma1 })
    }

    /// `sigma0^2 I` and `sigma1^2 I` in dimension `d`.
    pub fn isotropic(d: usize, sigma0: f64, sigma1: f64) -> Result<Self> {
        Self::new(Matrix::identity(d, d) * (sigma0 * sigma0), Matrix::identity(d, d) * (sigma1 * sigma1))
    }

    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }

    /// `S0^{-1/2} K S1^{-1/2}`.
    pub fn whiten(&self, k: &Matrix) -> Result<Matrix> {
        shape_check(k.shape() == self.sigma0.shape(), || {
            format!("cross-covariance is {:?}, expected {:?}", k.shape(), self.sigma0.shape())
        })?;
        Ok(sym_power(&self.sigma0, -0.5) * k * sym_power(&self.sigma1, -0.5))
    }

    /// `S0^{1/2} M S1^{1/2}`.
    pub fn color(&self, m: &Matrix) -> Matrix {
        sym_power(&self.sigma0, 0.5) * m * sym_power(&self.sigma1, 0.5)
    }

    pub fn is_commuting(&self) -> bool {
        let comm = &self.sigma0 * &self.sigma1 - &self.sigma1 * &self.sigma0;
        comm.norm() <= COMMUTATION_TOL * self.sigma0.norm() * self.sigma1.norm()
    }

    /// Orthogonal `U` with `S0 = U diag(a) U^T` and `S1 = U diag(b) U^T`.
    pub fn joint_eigenbasis(&self) -> Result<(Matrix, Vector, Vector)> {
        if !self.is_commuting() {
            return Err(Error::Unsupported("covariances do not commute".into()));
        }
        let d = self.dim();
        let eig = SymmetricEigen::new(self.sigma0.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let scale = eig.eigenvalues.abs().max();
        let mut basis = Matrix::zeros(d, d);
        let mut col = 0;
        let mut start = 0;
        while start < d {
            // group numerically repeated eigenvalues of S0
            let mut end = start + 1;
            while end < d && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= 1e-8 * scale {
                end += 1;
            }
            let w = Matrix::from_fn(d, end - start, |r, c| eig.eigenvectors[(r, order[start + c])]);
            // diagonalize S1 inside this eigenspace
            let inner = SymmetricEigen::new(w.transpose() * &self.sigma1 * &w);
            let rotated = &w * inner.eigenvectors;
            for c in 0..rotated.ncols() {
                basis.set_column(col, &rotated.column(c));
                col += 1;
            }
            start = end;
        }
        let a = Vector::from_fn(d, |i, _| basis.column(i).dot(&(&self.sigma0 * basis.column(i))));
        let b = Vector::from_fn(d, |i, _| basis.column(i).dot(&(&self.sigma1 * basis.column(i))));
        Ok((basis, a, b))
    }
}

pub fn gaussian_feasible(pair: &GaussianPair, k: &Matrix) -> Result<bool> {
    let m = pair.whiten(k)?;
    Ok(schatten_norm(&m, f64::INFINITY)? <= 1.0 + FEASIBILITY_SLACK)
}

/// `tr S0 + tr S1 - 2 tr K`, the expected squared distance under the coupling.
pub fn transport_cost(pair: &GaussianPair, k: &Matrix) -> f64 {
    pair.sigma0.trace() + pair.sigma1.trace() - 2.0 * k.trace()
}

/// Transport cost plus `lambda |S0^{-1/2} K S1^{-1/2}|_{S_1}`.
pub fn cross_cov_objective(pair: &GaussianPair, k: &Matrix, lambda: f64) -> Result<f64> {
    let m = pair.whiten(k)?;
    Ok(transport_cost(pair, k) + lambda * schatten_norm(&m, 1.0)?)
}

/// Transport cost plus `lambda |(K^T S0^{-1} - I) S0^{1/2}|_{S_1}`.
pub fn displacement_objective(pair: &GaussianPair, k: &Matrix, lambda: f64) -> Result<f64> {
    shape_check(k.shape() == pair.sigma0.shape(), || format!("cross-covariance is {:?}", k.shape()))?;
    let d = pair.dim();
    let a_map = k.transpose() * sym_power(&pair.sigma0, -1.0);
    let disp = (a_map - Matrix::identity(d, d)) * sym_power(&pair.sigma0, 0.5);
    Ok(transport_cost(pair, k) + lambda * schatten_norm(&disp, 1.0)?)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CrossCovSolution {
    pub k: Matrix,
    pub rank: usize,
    /// Singular values of `S0^{1/2} S1^{1/2}`, nonincreasing.
    pub spectrum: Vector,
    /// Selected directions `s_i`, aligned with `spectrum`.
    pub selection: Vector,
}

/// Hard thresholding: keep the singular directions of `S0^{1/2} S1^{1/2}` with
/// `sigma_i > lambda / 2`. Ties are excluded.
pub fn gaussian_cross_cov_solution(pair: &GaussianPair, lambda: f64) -> Result<CrossCovSolution> {
    check_lambda(lambda)?;
    let s0 = sym_power(&pair.sigma0, 0.5);
    let s1 = sym_power(&pair.sigma1, 0.5);
    let svd = thin_svd(&(&s0 * &s1))?;
    let selection = svd.singular_values.map(|s| if s > lambda / 2.0 { 1.0 } else { 0.0 });
    let rank = selection.iter().filter(|s| **s > 0.0).count();
    let k = &s0 * &svd.u * Matrix::from_diagonal(&selection) * svd.v.transpose() * &s1;
    Ok(CrossCovSolution { k, rank, spectrum: svd.singular_values, selection })
}

#[derive(Clone, Debug)]
pub struct DisplacementSolution {
    /// Linear barycentric map `A_lambda = U diag(alpha) U^T`.
    pub map: Matrix,
    /// `rank(A_lambda - I)`.
    pub rank: usize,
    pub alpha: Vector,
    /// Per-direction coupling strengths `m_i` in `[0, 1]`.
    pub strengths: Vector,
    /// Cross-covariance `U diag(sqrt(a b) m) U^T` of the optimal coupling.
    pub k: Matrix,
    pub basis: Matrix,
    pub a: Vector,
    pub b: Vector,
}

/// Closed-form displacement-penalized solution for commuting covariances.
pub fn gaussian_displacement_solution(pair: &GaussianPair, lambda: f64) -> Result<DisplacementSolution> {
    check_lambda(lambda)?;
    let (u, a, b) = pair.joint_eigenbasis()?;
    let d = pair.dim();
    let mut alpha = Vector::zeros(d);
    let mut strengths = Vector::zeros(d);
    for i in 0..d {
        let pruned = b[i] > a[i] && lambda >= 2.0 * a[i].sqrt();
        if pruned {
            alpha[i] = 1.0;
            strengths[i] = (a[i] / b[i]).sqrt();
        } else {
            alpha[i] = (b[i] / a[i]).sqrt();
            strengths[i] = 1.0;
        }
    }
    let rank = alpha.iter().filter(|x| (**x - 1.0).abs() > 1e-12).count();
    let map = &u * Matrix::from_diagonal(&alpha) * u.transpose();
    let kd = Vector::from_fn(d, |i, _| (a[i] * b[i]).sqrt() * strengths[i]);
    let k = &u * Matrix::from_diagonal(&kd) * u.transpose();
    Ok(DisplacementSolution { map, rank, alpha, strengths, k, basis: u, a, b })
}

/// A random feasible cross-covariance: `M` uniform on `[-1, 1]^{d x d}`,
/// rejected until `|M|_2 <= 1`, then colored.
pub fn random_feasible_cross_cov(pair: &GaussianPair, seed: u64) -> Matrix {
    let d = pair.dim();
    let mut rng = seeded_rng(seed);
    let mut m = Matrix::zeros(d, d);
    for _ in 0..1000 {
        m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..=1.0));
        if m.clone().singular_values().max() <= 1.0 {
            return pair.color(&m);
        }
    }
    let norm = m.clone().singular_values().max();
    pair.color(&(m / norm))
}

/// Smallest cross-covariance objective over `samples` random feasible `K`.
pub fn monte_carlo_cross_cov_best(
    pair: &GaussianPair,
    lambda: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    check_lambda(lambda)?;
    let values = par::map_range(samples, exec, |s| {
        let k = random_feasible_cross_cov(pair, seed.wrapping_add(s as u64));
        cross_cov_objective(pair, &k, lambda)
    });
    values.into_iter().try_fold(f64::INFINITY, |best, v| Ok(best.min(v?)))
}

/// Random commuting pair with eigenvalues drawn from `[lo, hi]` in a shared random basis.
pub fn gen_commuting_pair(d: usize, lo: f64, hi: f64, seed: u64) -> Result<GaussianPair> {
    if d == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(Error::Argument(format!("need d >= 1 and 0 < lo <= hi, got d={d}, [{lo}, {hi}]")));
    }
    let mut rng = seeded_rng(seed);
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = g.qr().q();
    let a = Vector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    let b = Vector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    let s0 = &u * Matrix::from_diagonal(&a) * u.transpose();
    let s1 = &u * Matrix::from_diagonal(&b) * u.transpose();
    GaussianPair::new((&s0 + s0.transpose()) * 0.5, (&s1 + s1.transpose()) * 0.5)
}
