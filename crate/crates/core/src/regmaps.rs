//! Affine maps from couplings to matrices and the regularizer terms built on them.
//!
//! Each map is `A(P) = L(P) + A(0)` where `L` is linear. `adjoint` is the exact
//! adjoint of `L` under the Frobenius inner product.

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_check, Error, Result};
use crate::measures::DiscreteMeasure;
use crate::schatten::{self, diagonal_power_subgradient, effective_rank_of_values, lp_norm, thin_svd};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// `A(P) = P`.
    Identity,
    /// `A(P) = Y P^T A^{-1/2}` with `A = diag(a)`.
    BarycentricMap,
    /// `A(P) = Y P^T A^{-1/2} - X A^{1/2}`.
    BarycentricDisplacement,
    /// Diagonal with entries `P_ij (x_i - y_j)_c`.
    ElasticL1Diag,
    /// Diagonal with entries `P_ij (Q_L (x_i - y_j))_c`.
    SubspaceElastic,
    /// `A(P) = X P Y^T`.
    CrossCovariance,
    /// `A(P) = sum_ij P_ij (x_i - y_j)(x_i - y_j)^T`.
    DisplacementCovariance,
}

impl MapKind {
    pub const ALL: [MapKind; 7] = [
        MapKind::Identity,
        MapKind::BarycentricMap,
        MapKind::BarycentricDisplacement,
        MapKind::ElasticL1Diag,
        MapKind::SubspaceElastic,
        MapKind::CrossCovariance,
        MapKind::DisplacementCovariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Identity => "identity",
            MapKind::BarycentricMap => "barycentric_map",
            MapKind::BarycentricDisplacement => "barycentric_displacement",
            MapKind::ElasticL1Diag => "elastic_l1_diag",
            MapKind::SubspaceElastic => "subspace_elastic",
            MapKind::CrossCovariance => "cross_covariance",
            MapKind::DisplacementCovariance => "displacement_covariance",
        }
    }

    fn needs_positive_weights(self) -> bool {
        matches!(self, MapKind::BarycentricMap | MapKind::BarycentricDisplacement)
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown map kind {s:?}")))
    }
}

/// Value of a map. Elastic kinds produce diagonal matrices, stored by their diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum MapImage {
    Dense(Matrix),
    Diagonal(Vector),
}

impl MapImage {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MapImage::Dense(m) => m.shape(),
            MapImage::Diagonal(v) => (v.len(), v.len()),
        }
    }

    /// Singular values in nonincreasing order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        match self {
            MapImage::Dense(m) => Ok(thin_svd(m)?.singular_values.iter().copied().collect()),
            MapImage::Diagonal(v) => {
                let mut s: Vec<f64> = v.iter().map(|x| x.abs()).collect();
                s.sort_by(|a, b| b.total_cmp(a));
                Ok(s)
            }
        }
    }

    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        match self {
            MapImage::Dense(m) => schatten::schatten_norm(m, p),
            MapImage::Diagonal(v) => lp_norm(v.iter().copied(), p),
        }
    }

    pub fn power_subgradient(&self, p: f64, q: f64) -> Result<MapImage> {
        match self {
            MapImage::Dense(m) => Ok(MapImage::Dense(schatten::schatten_power_subgradient(m, p, q)?)),
            MapImage::Diagonal(v) => Ok(MapImage::Diagonal(diagonal_power_subgradient(v, p, q)?)),
        }
    }

    pub fn effective_rank(&self) -> Result<f64> {
        effective_rank_of_values(self.singular_values()?.into_iter())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MapImage::Dense(m) => m.iter().all(|x| *x == 0.0),
            MapImage::Diagonal(v) => v.iter().all(|x| *x == 0.0),
        }
    }

    /// Frobenius inner product; a diagonal image pairs with the diagonal of a dense one.
    pub fn inner(&self, other: &MapImage) -> Result<f64> {
        shape_check(self.shape() == other.shape(), || {
            format!("image shapes {:?} and {:?} differ", self.shape(), other.shape())
        })?;
        Ok(match (self, other) {
            (MapImage::Dense(a), MapImage::Dense(b)) => a.dot(b),
            (MapImage::Diagonal(a), MapImage::Diagonal(b)) => a.dot(b),
            (MapImage::Dense(a), MapImage::Diagonal(b)) | (MapImage::Diagonal(b), MapImage::Dense(a)) => {
                a.diagonal().dot(b)
            }
        })
    }

    pub fn sub(&self, other: &MapImage) -> Result<MapImage> {
        shape_check(self.shape() == other.shape(), || {
            format!("image shapes {:?} and {:?} differ", self.shape(), other.shape())
        })?;
        Ok(match (self, other) {
            (MapImage::Dense(a), MapImage::Dense(b)) => MapImage::Dense(a - b),
            (MapImage::Diagonal(a), MapImage::Diagonal(b)) => MapImage::Diagonal(a - b),
            (a, b) => MapImage::Dense(a.to_dense() - b.to_dense()),
        })
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            MapImage::Dense(m) => m.clone(),
            MapImage::Diagonal(v) => Matrix::from_diagonal(v),
        }
    }
}

#[derive(Clone, Debug)]
enum Context {
    None,
    Barycentric { x_scaled: Matrix, y: Matrix, a_inv_sqrt: Vector, offset: bool },
    /// Columns are the (possibly projected) displacements, index `i * n + j`.
    Elastic { deltas: Matrix },
    Covariance { x: Matrix, y: Matrix },
}

/// An affine map `A : R^{m x n} -> R^{k x l}` with an exact adjoint.
#[derive(Clone, Debug)]
pub struct AffineCouplingMap {
    kind: MapKind,
    rows: usize,
    cols: usize,
    context: Context,
}

fn validate_projector(q: &Matrix, d: usize) -> Result<()> {
    shape_check(q.shape() == (d, d), || format!("projector is {:?}, expected {d}x{d}", q.shape()))?;
    let scale = 1.0 + q.norm();
    if (q - q.transpose()).norm() > 1e-10 * scale {
        return Err(Error::Argument("subspace projector is not symmetric".into()));
    }
    if (q * q - q).norm() > 1e-10 * scale {
        return Err(Error::Argument("subspace projector is not idempotent".into()));
    }
    Ok(())
}

impl AffineCouplingMap {
    pub fn identity(m: usize, n: usize) -> Self {
        Self { kind: MapKind::Identity, rows: m, cols: n, context: Context::None }
    }

    /// Builds any kind from the two measures. `projector` is required for
    /// [`MapKind::SubspaceElastic`] and ignored otherwise.
    pub fn new(
        kind: MapKind,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
        projector: Option<&Matrix>,
    ) -> Result<Self> {
        let (m, n) = (source.len(), target.len());
        if kind != MapKind::Identity {
            shape_check(source.dim() == target.dim(), || {
                format!("source dimension {} != target dimension {}", source.dim(), target.dim())
            })?;
        }
        if kind.needs_positive_weights() {
            if let Some(i) = source.weights().iter().position(|w| *w <= 0.0) {
                return Err(Error::Argument(format!("{kind} needs positive source weights, a[{i}] = 0")));
            }
        }
        let (x, y) = (source.points(), target.points());
        let context = match kind {
            MapKind::Identity => Context::None,
            MapKind::BarycentricMap | MapKind::BarycentricDisplacement => {
                let a = source.weights();
                let mut x_scaled = x.clone();
                for (mut col, ai) in x_scaled.column_iter_mut().zip(a.iter()) {
                    col *= ai.sqrt();
                }
                Context::Barycentric {
                    x_scaled,
                    y: y.clone(),
                    a_inv_sqrt: a.map(|w| 1.0 / w.sqrt()),
                    offset: kind == MapKind::BarycentricDisplacement,
                }
            }
            MapKind::ElasticL1Diag | MapKind::SubspaceElastic => {
                let d = x.nrows();
                let mut deltas = Matrix::zeros(d, m * n);
                for i in 0..m {
                    for j in 0..n {
                        deltas.set_column(i * n + j, &(x.column(i) - y.column(j)));
                    }
                }
                if kind == MapKind::SubspaceElastic {
                    let q = projector
                        .ok_or_else(|| Error::Argument("subspace_elastic requires a projector".into()))?;
                    validate_projector(q, d)?;
                    deltas = q * deltas;
                }
                Context::Elastic { deltas }
            }
            MapKind::CrossCovariance | MapKind::DisplacementCovariance => {
                Context::Covariance { x: x.clone(), y: y.clone() }
            }
        };
        Ok(Self { kind, rows: m, cols: n, context })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Shape of couplings this map accepts.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn output_shape(&self) -> (usize, usize) {
        match &self.context {
            Context::None => (self.rows, self.cols),
            Context::Barycentric { y, .. } => (y.nrows(), self.rows),
            Context::Elastic { deltas } => (deltas.len(), deltas.len()),
            Context::Covariance { x, .. } => (x.nrows(), x.nrows()),
        }
    }

    fn check_input(&self, p: &Matrix) -> Result<()> {
        shape_check(p.shape() == (self.rows, self.cols), || {
            format!("{} expects a {}x{} coupling, got {:?}", self.kind, self.rows, self.cols, p.shape())
        })
    }

    pub fn apply(&self, p: &Matrix) -> Result<MapImage> {
        self.check_input(p)?;
        Ok(match &self.context {
            Context::None => MapImage::Dense(p.clone()),
            Context::Barycentric { x_scaled, y, a_inv_sqrt, offset } => {
                let mut out = y * p.transpose();
                for (mut col, s) in out.column_iter_mut().zip(a_inv_sqrt.iter()) {
                    col *= *s;
                }
                if *offset {
                    out -= x_scaled;
                }
                MapImage::Dense(out)
            }
            Context::Elastic { deltas } => {
                let d = deltas.nrows();
                let mut out = Vector::zeros(deltas.len());
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        let k = i * self.cols + j;
                        let pij = p[(i, j)];
                        for c in 0..d {
                            out[k * d + c] = pij * deltas[(c, k)];
                        }
                    }
                }
                MapImage::Diagonal(out)
            }
            Context::Covariance { x, y } => {
                let xpy = x * p * y.transpose();
                if self.kind == MapKind::CrossCovariance {
                    MapImage::Dense(xpy)
                } else {
                    let r = p.column_sum();
                    let c = p.row_sum().transpose();
                    let xx = x * Matrix::from_diagonal(&r) * x.transpose();
                    let yy = y * Matrix::from_diagonal(&c) * y.transpose();
                    MapImage::Dense(xx - &xpy - xpy.transpose() + yy)
                }
            }
        })
    }

    /// `A(0)`.
    pub fn offset(&self) -> MapImage {
        self.apply(&Matrix::zeros(self.rows, self.cols)).expect("zero matrix has the input shape")
    }

    pub fn linear_part(&self, p: &Matrix) -> Result<MapImage> {
        self.apply(p)?.sub(&self.offset())
    }

    /// Adjoint of the linear part, an `m x n` matrix.
    pub fn adjoint(&self, g: &MapImage) -> Result<Matrix> {
        shape_check(g.shape() == self.output_shape(), || {
            format!("{} adjoint expects {:?}, got {:?}", self.kind, self.output_shape(), g.shape())
        })?;
        let dense = |g: &MapImage| -> Result<Matrix> {
            match g {
                MapImage::Dense(m) => Ok(m.clone()),
                MapImage::Diagonal(_) => Ok(g.to_dense()),
            }
        };
        Ok(match &self.context {
            Context::None => dense(g)?,
            Context::Barycentric { y, a_inv_sqrt, .. } => {
                let mut out = dense(g)?.transpose() * y;
                for (mut row, s) in out.row_iter_mut().zip(a_inv_sqrt.iter()) {
                    row *= *s;
                }
                out
            }
            Context::Elastic { deltas } => {
                let d = deltas.nrows();
                let diag: Vector = match g {
                    MapImage::Diagonal(v) => v.clone(),
                    MapImage::Dense(m) => m.diagonal(),
                };
                Matrix::from_fn(self.rows, self.cols, |i, j| {
                    let k = i * self.cols + j;
                    (0..d).map(|c| diag[k * d + c] * deltas[(c, k)]).sum()
                })
            }
            Context::Covariance { x, y } => {
                let g = dense(g)?;
                let xgy = x.transpose() * &g * y;
                if self.kind == MapKind::CrossCovariance {
                    xgy
                } else {
                    let ygx_t = x.transpose() * g.transpose() * y;
                    let gx = &g * x;
                    let gy = &g * y;
                    let xx = Vector::from_fn(self.rows, |i, _| x.column(i).dot(&gx.column(i)));
                    let yy = Vector::from_fn(self.cols, |j, _| y.column(j).dot(&gy.column(j)));
                    Matrix::from_fn(self.rows, self.cols, |i, j| xx[i] - xgy[(i, j)] - ygx_t[(i, j)] + yy[j])
                }
            }
        })
    }
}

/// One term `lambda * |A(P)|_{S_p}^q` of the objective.
#[derive(Clone, Debug)]
pub struct RegularizerTerm {
    pub strength: f64,
    pub schatten_p: f64,
    pub exponent: f64,
    pub map: AffineCouplingMap,
}

impl RegularizerTerm {
    pub fn new(strength: f64, schatten_p: f64, exponent: f64, map: AffineCouplingMap) -> Result<Self> {
        if !(strength >= 0.0) || !strength.is_finite() {
            return Err(Error::Argument(format!("strength must be finite and nonnegative, got {strength}")));
        }
        if schatten_p.is_nan() || schatten_p < 1.0 || exponent.is_nan() || exponent < 1.0 || !exponent.is_finite() {
            return Err(Error::Unsupported(format!(
                "convex regime needs p >= 1 and finite q >= 1, got p = {schatten_p}, q = {exponent}"
            )));
        }
        Ok(Self { strength, schatten_p, exponent, map })
    }

    pub fn penalty(&self, p: &Matrix) -> Result<f64> {
        if self.strength == 0.0 {
            self.map.check_input(p)?;
            return Ok(0.0);
        }
        let image = self.map.apply(p)?;
        Ok(self.strength * image.schatten_norm(self.schatten_p)?.powf(self.exponent))
    }

    /// `lambda * A^*(subgradient of |.|^q at A(P))`.
    pub fn subgradient(&self, p: &Matrix) -> Result<Matrix> {
        if self.strength == 0.0 {
            self.map.check_input(p)?;
            return Ok(Matrix::zeros(p.nrows(), p.ncols()));
        }
        let image = self.map.apply(p)?;
        let g = image.power_subgradient(self.schatten_p, self.exponent)?;
        Ok(self.map.adjoint(&g)? * self.strength)
    }
}
