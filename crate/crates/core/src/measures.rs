//! Discrete measures, ground costs, CSV ingestion and synthetic instances.
//!
//! Generated instances come with their analytic optimum so that solvers and
//! certificates can be checked against ground truth:
//!
//! * [`gen_clustered_instance`] builds `R` matched clusters of `g` points whose
//!   nuclear-norm regularized optimum is the block-uniform coupling.
//! * [`gen_symmetric_pairs_instance`] builds clusters on a line with two
//!   mirrored targets each; the equal-split coupling has a rank-one barycentric
//!   displacement.
//! * [`gen_gaussian_mixture`] samples isotropic Gaussian clusters.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_check, Error, Result};
use crate::polytope::Coupling;
use crate::{Matrix, Vector};

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOL: f64 = 1e-12;

/// The pseudo-random generator used by every generator in the crate.
pub type InstanceRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A weighted point cloud. Points are the columns of a `d x k` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: Matrix,
    weights: Vector,
}

impl DiscreteMeasure {
    pub fn new(points: Matrix, weights: Vector) -> Result<Self> {
        shape_check(points.ncols() == weights.len(), || {
            format!("{} points but {} weights", points.ncols(), weights.len())
        })?;
        if weights.is_empty() {
            return Err(Error::EmptyInput("measure has no support points".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Argument(format!("weights must be finite and nonnegative, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Argument(format!("weights sum to {total}, expected 1")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("support points must be finite".into()));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights `1/k` on the columns of `points`.
    pub fn uniform(points: Matrix) -> Result<Self> {
        let k = points.ncols();
        if k == 0 {
            return Err(Error::EmptyInput("measure has no support points".into()));
        }
        Self::new(points, Vector::from_element(k, 1.0 / k as f64))
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn weights(&self) -> &Vector {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }
}

/// Ground cost `C[i][j] = |x_i - y_j|^exponent`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    pub entries: Matrix,
    pub exponent: f64,
}

impl CostMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

fn squared_distance(x: &Matrix, i: usize, y: &Matrix, j: usize) -> f64 {
    x.column(i)
        .iter()
        .zip(y.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

pub fn cost_matrix(source: &DiscreteMeasure, target: &DiscreteMeasure, exponent: f64) -> Result<CostMatrix> {
    shape_check(source.dim() == target.dim(), || {
        format!("source dimension {} != target dimension {}", source.dim(), target.dim())
    })?;
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::Argument(format!("cost exponent must be positive, got {exponent}")));
    }
    let (x, y) = (source.points(), target.points());
    let entries = Matrix::from_fn(source.len(), target.len(), |i, j| {
        let sq = squared_distance(x, i, y, j);
        if exponent == 2.0 {
            sq
        } else {
            sq.sqrt().powf(exponent)
        }
    });
    Ok(CostMatrix { entries, exponent })
}

/// How weights are assigned when reading a point cloud.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// `1/k` for each row. A header column literally named `weight` is skipped.
    Uniform,
    /// Weights come from the named header column and are normalized to sum to one.
    Column(String),
}

/// Reads a CSV point cloud: one point per row, optional header row.
pub fn load_point_cloud(path: impl AsRef<Path>, weight_mode: WeightMode) -> Result<DiscreteMeasure> {
    let file = std::fs::File::open(path.as_ref())?;
    read_point_cloud(file, weight_mode)
}

pub fn read_point_cloud<R: std::io::Read>(reader: R, weight_mode: WeightMode) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(idx + 1),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if header.is_none() && rows.is_empty() && record.iter().all(|f| f.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_owned).collect());
            width = Some(record.len());
            continue;
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {w} columns, found {}", record.len()),
                });
            }
        } else {
            width = Some(record.len());
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {col}: cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data { row, message: format!("column {col}: non-finite value {field}") });
            }
            values.push(v);
        }
        rows.push((row, values));
    }

    if rows.is_empty() {
        return Err(Error::EmptyInput("point cloud contains no data rows".into()));
    }
    let width = width.unwrap_or(0);

    let weight_col = match (&weight_mode, &header) {
        (WeightMode::Uniform, Some(h)) => h.iter().position(|c| c == "weight").map(|c| (c, false)),
        (WeightMode::Uniform, None) => None,
        (WeightMode::Column(name), Some(h)) => match h.iter().position(|c| c == name) {
            Some(c) => Some((c, true)),
            None => return Err(Error::Argument(format!("weight column {name:?} not found in header"))),
        },
        (WeightMode::Column(name), None) => {
            return Err(Error::Argument(format!("weight column {name:?} requested but the file has no header")))
        }
    };

    let coord_cols: Vec<usize> = (0..width).filter(|c| weight_col.map_or(true, |(w, _)| w != *c)).collect();
    if coord_cols.is_empty() {
        return Err(Error::EmptyInput("point cloud has no coordinate columns".into()));
    }
    let k = rows.len();
    let points = Matrix::from_fn(coord_cols.len(), k, |r, i| rows[i].1[coord_cols[r]]);

    let weights = match weight_col {
        Some((c, true)) => {
            let mut w = Vector::from_fn(k, |i, _| rows[i].1[c]);
            if let Some(i) = (0..k).find(|&i| w[i] < 0.0) {
                return Err(Error::Data { row: rows[i].0, message: format!("negative weight {}", w[i]) });
            }
            let total = w.sum();
            if !(total > 0.0) {
                return Err(Error::Data { row: rows[0].0, message: "weights sum to zero".into() });
            }
            if (total - 1.0).abs() > MASS_TOL {
                w /= total;
            }
            w
        }
        _ => Vector::from_element(k, 1.0 / k as f64),
    };
    DiscreteMeasure::new(points, weights)
}

/// Isotropic Gaussian clusters with uniform weights.
///
/// `variance` is per coordinate. Points are ordered cluster by cluster.
pub fn gen_gaussian_mixture(
    centers: &[Vec<f64>],
    variance: f64,
    points_per_cluster: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Argument(format!("variance must be nonnegative, got {variance}")));
    }
    if centers.is_empty() || points_per_cluster == 0 {
        return Err(Error::Argument("need at least one center and one point per cluster".into()));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::Shape("centers must share a positive dimension".into()));
    }
    let std = variance.sqrt();
    let mut rng = seeded_rng(seed);
    let k = centers.len() * points_per_cluster;
    let mut points = Matrix::zeros(d, k);
    for (t, c) in centers.iter().enumerate() {
        for s in 0..points_per_cluster {
            let col = t * points_per_cluster + s;
            for r in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                points[(r, col)] = c[r] + std * z;
            }
        }
    }
    DiscreteMeasure::uniform(points)
}

fn random_unit_vector(rng: &mut InstanceRng, d: usize) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// How target points are placed around their cluster center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetMode {
    /// All `g` targets of a cluster coincide with its center. Certified.
    Exact,
    /// Targets get isotropic Gaussian noise of standard deviation `sigma`. Not certified.
    Jitter { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteredSpec {
    /// Points per cluster (`g`).
    pub group_size: usize,
    pub source_centers: Vec<Vec<f64>>,
    pub target_centers: Vec<Vec<f64>>,
    /// Ball radius `rho` for the sources.
    pub radius: f64,
    pub mode: TargetMode,
    pub seed: u64,
}

/// `R` matched clusters of equal size and the block-uniform coupling they admit.
#[derive(Clone, Debug)]
pub struct ClusteredInstance {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub source_blocks: Vec<Vec<usize>>,
    pub target_blocks: Vec<Vec<usize>>,
    /// Entries `1/(R g^2)` on the diagonal blocks, zero elsewhere, so rows sum to `1/(R g)`.
    pub ground_truth: Coupling,
    /// `g * Delta_min`; `+inf` when there is a single cluster.
    pub lambda_window_upper: f64,
    /// Smallest across-cluster excess squared cost `Delta_min`.
    pub min_excess_cost: f64,
    /// `Gamma = min_{s != t} |c_t - d_s|`.
    pub inter_distance: f64,
    /// `gamma = max_t |c_t - d_t|`.
    pub intra_distance: f64,
    pub spec: ClusteredSpec,
    /// True when targets are exact cluster copies, so every assumption holds exactly.
    pub certified: bool,
}

impl ClusteredInstance {
    pub fn clusters(&self) -> usize {
        self.source_blocks.len()
    }

    /// Re-checks cluster sizes, ball membership, the separation margin and,
    /// for certified instances, within-cluster distance equality.
    pub fn check_assumptions(&self) -> Result<()> {
        let spec = &self.spec;
        let g = spec.group_size;
        let rho = spec.radius;
        if self.source_blocks.iter().chain(&self.target_blocks).any(|b| b.len() != g) {
            return Err(Error::Generation("clusters must all have size g".into()));
        }
        if !(self.inter_distance > self.intra_distance + 4.0 * rho) {
            return Err(Error::Generation(format!(
                "separation margin violated: Gamma = {} <= gamma + 4 rho = {}",
                self.inter_distance,
                self.intra_distance + 4.0 * rho
            )));
        }
        let x = self.source.points();
        let y = self.target.points();
        for (t, block) in self.source_blocks.iter().enumerate() {
            for &i in block {
                let xi: Vec<f64> = x.column(i).iter().copied().collect();
                if dist(&xi, &spec.source_centers[t]) > rho + 1e-12 {
                    return Err(Error::Generation(format!("source {i} outside its ball")));
                }
                if self.certified {
                    let d0 = squared_distance(x, i, y, self.target_blocks[t][0]);
                    for &j in &self.target_blocks[t] {
                        let dj = squared_distance(x, i, y, j);
                        if (dj - d0).abs() > 1e-10 * (1.0 + d0) {
                            return Err(Error::Generation(format!(
                                "unequal within-cluster distances for source {i}"
                            )));
                        }
                    }
                }
            }
        }
        if self.certified {
            for (t, block) in self.target_blocks.iter().enumerate() {
                for &j in block {
                    let yj: Vec<f64> = y.column(j).iter().copied().collect();
                    if dist(&yj, &spec.target_centers[t]) > rho + 1e-12 {
                        return Err(Error::Generation(format!("target {j} outside its ball")));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn gen_clustered_instance(spec: &ClusteredSpec) -> Result<ClusteredInstance> {
    let r = spec.source_centers.len();
    let g = spec.group_size;
    if r == 0 || g == 0 {
        return Err(Error::Argument("need R >= 1 clusters of size g >= 1".into()));
    }
    if spec.target_centers.len() != r {
        return Err(Error::Shape(format!(
            "{} source centers but {} target centers",
            r,
            spec.target_centers.len()
        )));
    }
    let d = spec.source_centers[0].len();
    if d == 0 || spec.source_centers.iter().chain(&spec.target_centers).any(|c| c.len() != d) {
        return Err(Error::Shape("centers must share a positive dimension".into()));
    }
    if !(spec.radius >= 0.0) || !spec.radius.is_finite() {
        return Err(Error::Argument(format!("radius must be nonnegative, got {}", spec.radius)));
    }
    if let TargetMode::Jitter { sigma } = spec.mode {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Argument(format!("jitter sigma must be nonnegative, got {sigma}")));
        }
    }

    let rho = spec.radius;
    let intra = (0..r)
        .map(|t| dist(&spec.source_centers[t], &spec.target_centers[t]))
        .fold(0.0, f64::max);
    let mut inter = f64::INFINITY;
    let mut worst: Option<(usize, usize, f64)> = None;
    for t in 0..r {
        for s in 0..r {
            if s == t {
                continue;
            }
            let dts = dist(&spec.source_centers[t], &spec.target_centers[s]);
            inter = inter.min(dts);
            if !(dts > intra + 4.0 * rho) && worst.map_or(true, |w| dts < w.2) {
                worst = Some((s, t, dts));
            }
        }
    }
    if let Some((s, t, dts)) = worst {
        return Err(Error::Generation(format!(
            "separation violated for pair (s={s}, t={t}): |c_{t} - d_{s}| = {dts} <= gamma + 4 rho = {}",
            intra + 4.0 * rho
        )));
    }

    let mut rng = seeded_rng(spec.seed);
    let direction = random_unit_vector(&mut rng, d);
    let m = r * g;
    let mut x = Matrix::zeros(d, m);
    let mut y = Matrix::zeros(d, m);
    for t in 0..r {
        for s in 0..g {
            let i = t * g + s;
            let offset = if rho > 0.0 { rng.random_range(-rho..=rho) } else { 0.0 };
            for c in 0..d {
                x[(c, i)] = spec.source_centers[t][c] + offset * direction[c];
                y[(c, i)] = spec.target_centers[t][c];
            }
            if let TargetMode::Jitter { sigma } = spec.mode {
                for c in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    y[(c, i)] += sigma * z;
                }
            }
        }
    }
    let blocks: Vec<Vec<usize>> = (0..r).map(|t| (t * g..(t + 1) * g).collect()).collect();

    let mut min_excess = f64::INFINITY;
    for t in 0..r {
        for &i in &blocks[t] {
            let within_max = blocks[t].iter().map(|&j| squared_distance(&x, i, &y, j)).fold(f64::MIN, f64::max);
            for s in (0..r).filter(|&s| s != t) {
                let across_min = blocks[s]
                    .iter()
                    .map(|&j| squared_distance(&x, i, &y, j))
                    .fold(f64::INFINITY, f64::min);
                min_excess = min_excess.min(across_min - within_max);
            }
        }
    }
    let lambda_window_upper = if r == 1 { f64::INFINITY } else { g as f64 * min_excess };

    let entry = 1.0 / (r * g * g) as f64;
    let plan = Matrix::from_fn(m, m, |i, j| if i / g == j / g { entry } else { 0.0 });
    let source = DiscreteMeasure::uniform(x)?;
    let target = DiscreteMeasure::uniform(y)?;
    let ground_truth = Coupling::new(plan, source.weights().clone(), target.weights().clone())?;

    let inst = ClusteredInstance {
        source,
        target,
        source_blocks: blocks.clone(),
        target_blocks: blocks,
        ground_truth,
        lambda_window_upper,
        min_excess_cost: min_excess,
        inter_distance: inter,
        intra_distance: intra,
        spec: spec.clone(),
        certified: matches!(spec.mode, TargetMode::Exact),
    };
    if inst.certified {
        inst.check_assumptions()?;
    }
    Ok(inst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricPairsSpec {
    pub cluster_sizes: Vec<usize>,
    /// Cluster positions `mu_t` along `u`.
    pub scalars: Vec<f64>,
    pub epsilon: f64,
    pub radius: f64,
    /// Ambient dimension, at least 2.
    pub dim: usize,
    pub seed: u64,
}

/// Clusters on a line, each matched to a mirrored pair of targets `m_t +- eps v`.
#[derive(Clone, Debug)]
pub struct SymmetricPairsInstance {
    pub source: DiscreteMeasure,
    /// Target `2t` is `m_t + eps v`, target `2t + 1` is `m_t - eps v`.
    pub target: DiscreteMeasure,
    pub u: Vector,
    pub v: Vector,
    pub source_blocks: Vec<Vec<usize>>,
    /// Offsets `xi_i` with `x_i = m_t + xi_i u`.
    pub offsets: Vec<f64>,
    /// `Lambda = min_{s != t} |mu_t - mu_s|`.
    pub min_gap: f64,
    /// `Lambda - 2 rho`.
    pub lambda_max: f64,
    /// Sends half of each source mass to each of its two targets.
    pub ground_truth: Coupling,
    pub spec: SymmetricPairsSpec,
}

impl SymmetricPairsInstance {
    pub fn clusters(&self) -> usize {
        self.spec.scalars.len()
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.source_blocks.iter().position(|b| b.contains(&i)).expect("index in range")
    }

    pub fn check_assumptions(&self) -> Result<()> {
        let spec = &self.spec;
        if !(self.min_gap > 2.0 * spec.radius) {
            return Err(Error::Generation(format!(
                "Lambda = {} <= 2 rho = {}",
                self.min_gap,
                2.0 * spec.radius
            )));
        }
        if (self.u.dot(&self.v)).abs() > 1e-12 || (self.u.norm() - 1.0).abs() > 1e-12 || (self.v.norm() - 1.0).abs() > 1e-12
        {
            return Err(Error::Generation("u, v are not orthonormal".into()));
        }
        let a = self.source.weights();
        let b = self.target.weights();
        for (t, block) in self.source_blocks.iter().enumerate() {
            let mass: f64 = block.iter().map(|&i| a[i]).sum();
            for j in [2 * t, 2 * t + 1] {
                if (b[j] - 0.5 * mass).abs() > 1e-14 {
                    return Err(Error::Generation(format!("target {j} mass mismatch")));
                }
            }
            for &i in block {
                let xi = self.source.points().column(i);
                let expected = &self.u * (spec.scalars[t] + self.offsets[i]);
                if (xi - expected).norm() > 1e-12 || self.offsets[i].abs() > spec.radius {
                    return Err(Error::Generation(format!("source {i} violates its segment")));
                }
            }
        }
        Ok(())
    }
}

pub fn gen_symmetric_pairs_instance(spec: &SymmetricPairsSpec) -> Result<SymmetricPairsInstance> {
    let r = spec.scalars.len();
    if r < 2 {
        return Err(Error::Argument("need at least two clusters".into()));
    }
    if spec.cluster_sizes.len() != r || spec.cluster_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Argument("need one nonzero size per cluster".into()));
    }
    if spec.dim < 2 {
        return Err(Error::Argument("dimension must be at least 2".into()));
    }
    if !(spec.epsilon > 0.0) || !spec.epsilon.is_finite() {
        return Err(Error::Argument(format!("epsilon must be positive, got {}", spec.epsilon)));
    }
    if !(spec.radius >= 0.0) || !spec.radius.is_finite() {
        return Err(Error::Argument(format!("radius must be nonnegative, got {}", spec.radius)));
    }
    let mut min_gap = f64::INFINITY;
    for t in 0..r {
        for s in t + 1..r {
            min_gap = min_gap.min((spec.scalars[t] - spec.scalars[s]).abs());
        }
    }
    if !(min_gap > 2.0 * spec.radius) {
        return Err(Error::Generation(format!(
            "minimum cluster gap Lambda = {min_gap} must exceed 2 rho = {}",
            2.0 * spec.radius
        )));
    }

    let mut rng = seeded_rng(spec.seed);
    let d = spec.dim;
    let u = random_unit_vector(&mut rng, d);
    let v = loop {
        let w = random_unit_vector(&mut rng, d);
        let w = &w - &u * u.dot(&w);
        let n = w.norm();
        if n > 1e-6 {
            let w = w / n;
            // one more pass to clean up rounding
            let w = &w - &u * u.dot(&w);
            break w.normalize();
        }
    };

    let m: usize = spec.cluster_sizes.iter().sum();
    let mut x = Matrix::zeros(d, m);
    let mut offsets = Vec::with_capacity(m);
    let mut blocks = Vec::with_capacity(r);
    let mut next = 0;
    for (t, &size) in spec.cluster_sizes.iter().enumerate() {
        let block: Vec<usize> = (next..next + size).collect();
        for &i in &block {
            let xi = if spec.radius > 0.0 { rng.random_range(-spec.radius..=spec.radius) } else { 0.0 };
            offsets.push(xi);
            x.set_column(i, &(&u * (spec.scalars[t] + xi)));
        }
        next += size;
        blocks.push(block);
    }
    let source = DiscreteMeasure::uniform(x)?;
    let a = source.weights().clone();

    let mut y = Matrix::zeros(d, 2 * r);
    let mut b = DVector::zeros(2 * r);
    for t in 0..r {
        let centre = &u * spec.scalars[t];
        y.set_column(2 * t, &(&centre + &v * spec.epsilon));
        y.set_column(2 * t + 1, &(&centre - &v * spec.epsilon));
        let mass: f64 = blocks[t].iter().map(|&i| a[i]).sum();
        b[2 * t] = 0.5 * mass;
        b[2 * t + 1] = 0.5 * mass;
    }
    // Fold rounding drift into the last target so the total is exactly representable.
    let drift = 1.0 - b.sum();
    b[2 * r - 1] += drift;
    let target = DiscreteMeasure::new(y, b.clone())?;

    let mut plan = Matrix::zeros(m, 2 * r);
    for (t, block) in blocks.iter().enumerate() {
        for &i in block {
            plan[(i, 2 * t)] = 0.5 * a[i];
            plan[(i, 2 * t + 1)] = 0.5 * a[i];
        }
    }
    let ground_truth = Coupling::new(plan, a, b)?;

    Ok(SymmetricPairsInstance {
        source,
        target,
        u,
        v,
        source_blocks: blocks,
        offsets,
        min_gap,
        lambda_max: min_gap - 2.0 * spec.radius,
        ground_truth,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(cols: &[&[f64]]) -> Matrix {
        let d = cols[0].len();
        Matrix::from_fn(d, cols.len(), |r, c| cols[c][r])
    }

    #[test]
    fn cost_matrix_examples() {
        let x = DiscreteMeasure::uniform(pts(&[&[0.0, 0.0]])).unwrap();
        let y = DiscreteMeasure::uniform(pts(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(cost_matrix(&x, &y, 2.0).unwrap().entries[(0, 0)], 25.0);
        assert_abs_diff_eq!(cost_matrix(&x, &y, 1.0).unwrap().entries[(0, 0)], 5.0, epsilon = 1e-14);

        let x = DiscreteMeasure::uniform(pts(&[&[0.0]])).unwrap();
        let y = DiscreteMeasure::uniform(pts(&[&[2.0]])).unwrap();
        assert_abs_diff_eq!(cost_matrix(&x, &y, 1.0).unwrap().entries[(0, 0)], 2.0, epsilon = 1e-15);

        let z = DiscreteMeasure::uniform(pts(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]])).unwrap();
        let c = cost_matrix(&z, &z, 2.0).unwrap();
        for i in 0..3 {
            assert_eq!(c.entries[(i, i)], 0.0);
        }
    }

    #[test]
    fn cost_matrix_rejects_dimension_mismatch() {
        let x = DiscreteMeasure::uniform(pts(&[&[0.0, 0.0]])).unwrap();
        let y = DiscreteMeasure::uniform(pts(&[&[1.0]])).unwrap();
        assert!(matches!(cost_matrix(&x, &y, 2.0), Err(Error::Shape(_))));
        assert!(matches!(cost_matrix(&x, &x, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn measure_validation() {
        let p = pts(&[&[0.0], &[1.0]]);
        assert!(DiscreteMeasure::new(p.clone(), Vector::from_vec(vec![0.5, 0.6])).is_err());
        assert!(DiscreteMeasure::new(p.clone(), Vector::from_vec(vec![1.5, -0.5])).is_err());
        assert!(DiscreteMeasure::new(p.clone(), Vector::from_vec(vec![1.0])).is_err());
        assert!(DiscreteMeasure::new(p, Vector::from_vec(vec![0.25, 0.75])).is_ok());
    }

    #[test]
    fn csv_uniform_and_weighted() {
        let m = read_point_cloud("0,0\n1,0\n0,1\n".as_bytes(), WeightMode::Uniform).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.len(), 3);
        for w in m.weights().iter() {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }

        let m = read_point_cloud(
            "x0,x1,weight\n0.0,1.0,0.2\n2.0,3.0,0.8\n".as_bytes(),
            WeightMode::Column("weight".into()),
        )
        .unwrap();
        assert_eq!(m.weights().as_slice(), &[0.2, 0.8]);
        assert_eq!(m.points()[(1, 1)], 3.0);

        // uniform mode skips a column called weight
        let m = read_point_cloud("x0,weight\n1.0,0.3\n2.0,0.7\n".as_bytes(), WeightMode::Uniform).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.weights().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_errors() {
        match read_point_cloud("1.0,abc\n".as_bytes(), WeightMode::Uniform) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match read_point_cloud("1.0,2.0\n3.0,4.0,5.0\n".as_bytes(), WeightMode::Uniform) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            read_point_cloud("1.0,inf\n".as_bytes(), WeightMode::Uniform),
            Err(Error::Data { row: 1, .. })
        ));
        assert!(matches!(read_point_cloud("".as_bytes(), WeightMode::Uniform), Err(Error::EmptyInput(_))));
        assert!(matches!(read_point_cloud("x0,x1\n".as_bytes(), WeightMode::Uniform), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn mixture_examples() {
        let centers = vec![vec![-2.0, 2.0], vec![-2.0, -2.0]];
        let m = gen_gaussian_mixture(&centers, 0.04, 10, 7).unwrap();
        assert_eq!(m.len(), 20);
        assert!(m.weights().iter().all(|w| (*w - 0.05).abs() < 1e-15));
        assert_eq!(m, gen_gaussian_mixture(&centers, 0.04, 10, 7).unwrap());
        assert_ne!(m, gen_gaussian_mixture(&centers, 0.04, 10, 8).unwrap());

        let m = gen_gaussian_mixture(&centers, 0.0, 3, 1).unwrap();
        for i in 0..6 {
            assert_eq!(m.points()[(0, i)], -2.0);
            assert_eq!(m.points()[(1, i)], if i < 3 { 2.0 } else { -2.0 });
        }
        assert!(gen_gaussian_mixture(&centers, -1.0, 3, 1).is_err());
    }

    fn quadrant_spec(radius: f64, seed: u64) -> ClusteredSpec {
        ClusteredSpec {
            group_size: 10,
            source_centers: vec![vec![-2.0, 2.0], vec![-2.0, -2.0]],
            target_centers: vec![vec![2.0, 2.0], vec![2.0, -2.0]],
            radius,
            mode: TargetMode::Exact,
            seed,
        }
    }

    #[test]
    fn clustered_instance_geometry() {
        let inst = gen_clustered_instance(&quadrant_spec(0.2, 3)).unwrap();
        // Gamma = |(-2,2) - (2,-2)| = sqrt(32), gamma = 4.
        assert_abs_diff_eq!(inst.inter_distance, 32f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(inst.intra_distance, 4.0, epsilon = 1e-14);
        assert!(inst.inter_distance > inst.intra_distance + 0.8);
        inst.check_assumptions().unwrap();
        assert!(inst.ground_truth.marginal_error() < 1e-15);
        assert!(inst.lambda_window_upper > 0.0 && inst.lambda_window_upper.is_finite());

        let exact = gen_clustered_instance(&quadrant_spec(0.0, 3)).unwrap();
        // every source sits on its center: Delta_min = 32 - 16
        assert_abs_diff_eq!(exact.min_excess_cost, 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exact.lambda_window_upper, 160.0, epsilon = 1e-10);
    }

    #[test]
    fn clustered_single_cluster_and_failures() {
        let spec = ClusteredSpec {
            group_size: 4,
            source_centers: vec![vec![0.0, 0.0]],
            target_centers: vec![vec![1.0, 0.0]],
            radius: 0.1,
            mode: TargetMode::Exact,
            seed: 0,
        };
        let inst = gen_clustered_instance(&spec).unwrap();
        assert_eq!(inst.lambda_window_upper, f64::INFINITY);
        assert!(inst.ground_truth.plan.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-16));

        // Gamma == gamma: margin violated
        let bad = ClusteredSpec {
            group_size: 2,
            source_centers: vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            target_centers: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            radius: 0.0,
            mode: TargetMode::Exact,
            seed: 0,
        };
        match gen_clustered_instance(&bad) {
            Err(Error::Generation(msg)) => assert!(msg.contains("pair")),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_pairs_examples() {
        let spec = SymmetricPairsSpec {
            cluster_sizes: vec![4, 6],
            scalars: vec![0.0, 5.0],
            epsilon: 0.5,
            radius: 1.0,
            dim: 3,
            seed: 11,
        };
        let inst = gen_symmetric_pairs_instance(&spec).unwrap();
        assert_abs_diff_eq!(inst.lambda_max, 3.0, epsilon = 1e-15);
        inst.check_assumptions().unwrap();
        assert!(inst.ground_truth.marginal_error() < 1e-15);

        let flat = gen_symmetric_pairs_instance(&SymmetricPairsSpec { radius: 0.0, ..spec.clone() }).unwrap();
        assert!(flat.offsets.iter().all(|&x| x == 0.0));

        let bad = SymmetricPairsSpec { scalars: vec![0.0, 1.0], ..spec };
        assert!(matches!(gen_symmetric_pairs_instance(&bad), Err(Error::Generation(_))));
    }
}
