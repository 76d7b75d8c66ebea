//! Point-cloud measures, couplings and tangent fields.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted point cloud in ℝᵈ.
///
/// Points are stored row-major in one flat buffer. Construction prunes
/// zero-weight atoms, merges exact duplicates (summing their weights) and
/// checks that the weights form a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Number of raw observations the measure was built from, if known.
    #[serde(default)]
    n_samples: Option<usize>,
}

const WEIGHT_SUM_TOL: f64 = 1e-6;

impl EmpiricalMeasure {
    /// Build from flat row-major points and weights.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::dim(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("measure has no atoms".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(
                "support point has a non-finite coordinate".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }

        // Merge duplicates, keep first-occurrence order, drop zero mass.
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(weights.len());
        let mut merged_pts = Vec::with_capacity(points.len());
        let mut merged_w: Vec<f64> = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = &points[i * dim..(i + 1) * dim];
            // +0.0 and -0.0 are the same location
            let key: Vec<u64> = p.iter().map(|x| (x + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&j) => merged_w[j] += w,
                None => {
                    index.insert(key, merged_w.len());
                    merged_pts.extend_from_slice(p);
                    merged_w.push(w);
                }
            }
        }
        if merged_w.is_empty() {
            return Err(Error::EmptyInput("all atoms have zero weight".into()));
        }
        let total: f64 = merged_w.iter().sum();
        merged_w.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            dim,
            points: merged_pts,
            weights: merged_w,
            n_samples: None,
        })
    }

    /// Uniform-weight measure over raw observations (one row per sample).
    pub fn from_samples(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::dim(format!(
                "{} coordinates are not a multiple of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        let mut m = Self::new(dim, points, vec![1.0 / n as f64; n])?;
        m.n_samples = Some(n);
        Ok(m)
    }

    /// Convenience constructor from a list of points.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("no points".into()))?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("points have differing dimensions"));
        }
        Self::from_samples(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms after merging.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_samples(&self) -> Option<usize> {
        self.n_samples
    }

    /// True when all atoms carry the same weight.
    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-12)
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mk, x) in m.iter_mut().zip(self.point(i)) {
                *mk += w * x;
            }
        }
        m
    }

    /// Translate every atom by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::dim("shift dimension differs from measure dimension"));
        }
        let points = self
            .points
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(x, s)| x + s))
            .collect();
        let mut m = Self::new(self.dim, points, self.weights.clone())?;
        m.n_samples = self.n_samples;
        Ok(m)
    }
}

/// Dense row-major matrix used for costs and transport plans.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data
            .chunks(self.cols.max(1))
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.data.chunks(self.cols.max(1)) {
            for (sj, x) in s.iter_mut().zip(r) {
                *sj += x;
            }
        }
        s
    }
}

/// Default tolerance on coupling marginals.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-7;

/// A transport plan between two measures.
#[derive(Debug, Clone)]
pub struct Coupling {
    plan: Matrix,
    source_marginal: Vec<f64>,
    target_marginal: Vec<f64>,
    regularization: f64,
}

impl Coupling {
    /// Wrap a plan, checking nonnegativity and both marginals at `tol`.
    pub fn new(
        plan: Matrix,
        source_marginal: Vec<f64>,
        target_marginal: Vec<f64>,
        regularization: f64,
        tol: f64,
    ) -> Result<Self> {
        let c = Self::new_unchecked(plan, source_marginal, target_marginal, regularization)?;
        let v = c.marginal_violation();
        if v > tol {
            return Err(Error::InvalidMeasure(format!(
                "plan marginals off by {v:.3e} (tolerance {tol:.1e})"
            )));
        }
        Ok(c)
    }

    pub(crate) fn new_unchecked(
        plan: Matrix,
        source_marginal: Vec<f64>,
        target_marginal: Vec<f64>,
        regularization: f64,
    ) -> Result<Self> {
        if plan.rows() != source_marginal.len() || plan.cols() != target_marginal.len() {
            return Err(Error::dim(format!(
                "plan is {}x{} but marginals have lengths {} and {}",
                plan.rows(),
                plan.cols(),
                source_marginal.len(),
                target_marginal.len()
            )));
        }
        if let Some(x) = plan
            .as_slice()
            .iter()
            .find(|x| !(**x >= 0.0) || !x.is_finite())
        {
            return Err(Error::InvalidMeasure(format!(
                "plan entry {x} is not a finite nonnegative mass"
            )));
        }
        Ok(Self {
            plan,
            source_marginal,
            target_marginal,
            regularization,
        })
    }

    pub fn plan(&self) -> &Matrix {
        &self.plan
    }

    pub fn source_marginal(&self) -> &[f64] {
        &self.source_marginal
    }

    pub fn target_marginal(&self) -> &[f64] {
        &self.target_marginal
    }

    /// Entropic regularization used to compute the plan; 0 for exact solvers.
    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Largest absolute deviation of any row or column sum from its marginal.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self.plan.row_sums();
        let cols = self.plan.col_sums();
        let r = rows
            .iter()
            .zip(&self.source_marginal)
            .map(|(a, b)| (a - b).abs());
        let c = cols
            .iter()
            .zip(&self.target_marginal)
            .map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// True when every row puts its mass on a single target atom
    /// (entries below `tol` times the row mass are ignored).
    pub fn is_deterministic(&self, tol: f64) -> bool {
        (0..self.plan.rows()).all(|i| {
            let row = self.plan.row(i);
            let mass: f64 = row.iter().sum();
            row.iter().filter(|&&x| x > tol * mass).count() <= 1
        })
    }
}

/// Displacement vectors attached to the atoms of a reference measure;
/// an element of the weighted space L²(μ̄; ℝᵈ).
#[derive(Debug, Clone)]
pub struct TangentField {
    dim: usize,
    vectors: Vec<f64>,
    ref_weights: Arc<[f64]>,
}

impl TangentField {
    pub fn new(dim: usize, vectors: Vec<f64>, ref_weights: Arc<[f64]>) -> Result<Self> {
        if dim == 0 || vectors.len() != dim * ref_weights.len() {
            return Err(Error::dim(format!(
                "{} field entries do not match {} atoms of dimension {dim}",
                vectors.len(),
                ref_weights.len()
            )));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(
                "tangent field has non-finite entries".into(),
            ));
        }
        Ok(Self {
            dim,
            vectors,
            ref_weights,
        })
    }

    pub fn zeros(dim: usize, ref_weights: Arc<[f64]>) -> Self {
        Self {
            dim,
            vectors: vec![0.0; dim * ref_weights.len()],
            ref_weights,
        }
    }

    /// The same constant vector at every atom.
    pub fn constant(v: &[f64], ref_weights: Arc<[f64]>) -> Self {
        let vectors = (0..ref_weights.len())
            .flat_map(|_| v.iter().copied())
            .collect();
        Self {
            dim: v.len(),
            vectors,
            ref_weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> usize {
        self.ref_weights.len()
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ref_weights(&self) -> &Arc<[f64]> {
        &self.ref_weights
    }

    pub(crate) fn check_compatible(&self, other: &TangentField) -> Result<()> {
        if self.dim != other.dim || self.atoms() != other.atoms() {
            return Err(Error::dim(format!(
                "fields on {}x{} and {}x{} grids",
                self.atoms(),
                self.dim,
                other.atoms(),
                other.dim
            )));
        }
        if !Arc::ptr_eq(&self.ref_weights, &other.ref_weights)
            && self.ref_weights[..] != other.ref_weights[..]
        {
            return Err(Error::dim("fields use different reference weights"));
        }
        Ok(())
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &TangentField, scale: f64) -> Result<TangentField> {
        self.check_compatible(other)?;
        let vectors = self
            .vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(TangentField {
            dim: self.dim,
            vectors,
            ref_weights: self.ref_weights.clone(),
        })
    }

    /// Squared norm in L²(μ̄).
    pub fn norm_sq(&self) -> f64 {
        self.ref_weights
            .iter()
            .zip(self.vectors.chunks(self.dim))
            .map(|(w, v)| w * v.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}
