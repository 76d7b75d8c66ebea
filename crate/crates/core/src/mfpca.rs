//! Functional PCA of tangent fields in the weighted space L²(μ̄).
//!
//! With reference weights `w̄ᵢ`, the inner product is
//! `⟨f, g⟩ = Σᵢ w̄ᵢ f(xᵢ)ᵀ g(xᵢ)`. Scaling each field by `√w̄ᵢ` turns it into
//! an ordinary Euclidean vector of length `m·d`, so the covariance operator
//! is diagonalized either through the `n₀ × n₀` Gram matrix of centered
//! fields or through the `m·d × m·d` weighted covariance, whichever is
//! smaller. Both give the same nonzero spectrum.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::TangentField;

/// Relative eigenvalue floor below which directions count as numerical noise.
const EIGEN_FLOOR: f64 = 1e-10;

/// Default explained-variance fraction used to choose K.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.9;

/// `⟨f, g⟩` in L²(μ̄).
pub fn weighted_inner(f: &TangentField, g: &TangentField) -> Result<f64> {
    f.check_compatible(g)?;
    Ok(weighted_dot(
        f.ref_weights(),
        f.dim(),
        f.vectors(),
        g.vectors(),
    ))
}

fn weighted_dot(w: &[f64], d: usize, a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a.chunks(d).zip(b.chunks(d)))
        .map(|(wi, (x, y))| wi * x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// How to pick the truncation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KRule {
    /// Smallest K reaching the variance fraction, capped at `min(r, n₀/2)`.
    Variance(f64),
    /// Fixed K (clamped to the rank).
    Fixed(usize),
}

impl Default for KRule {
    fn default() -> Self {
        KRule::Variance(DEFAULT_VARIANCE_FRACTION)
    }
}

/// Mean field and orthonormal eigenfields of the calibration fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct EigenBasis {
    dim: usize,
    weights: Arc<[f64]>,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Row-major `r × (m·d)`.
    eigenfields: Vec<f64>,
    k: usize,
    n0: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisRepr {
    dim: usize,
    weights: Vec<f64>,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenfields: Vec<Vec<f64>>,
    k: usize,
    n0: usize,
}

impl From<EigenBasis> for BasisRepr {
    fn from(b: EigenBasis) -> Self {
        let p = b.mean.len();
        BasisRepr {
            dim: b.dim,
            weights: b.weights.to_vec(),
            eigenfields: b
                .eigenfields
                .chunks(p.max(1))
                .map(<[f64]>::to_vec)
                .collect(),
            mean: b.mean,
            eigenvalues: b.eigenvalues,
            k: b.k,
            n0: b.n0,
        }
    }
}

impl TryFrom<BasisRepr> for EigenBasis {
    type Error = Error;

    fn try_from(r: BasisRepr) -> Result<Self> {
        let p = r.dim * r.weights.len();
        if r.dim == 0 || r.mean.len() != p || r.eigenfields.iter().any(|f| f.len() != p) {
            return Err(Error::Parse(
                "eigenbasis arrays do not match the atom grid".into(),
            ));
        }
        if r.eigenfields.len() != r.eigenvalues.len() || r.eigenvalues.is_empty() {
            return Err(Error::Parse(
                "eigenbasis needs one field per eigenvalue".into(),
            ));
        }
        if r.k == 0 || r.k > r.eigenvalues.len() {
            return Err(Error::Parse(format!(
                "K = {} outside 1..={}",
                r.k,
                r.eigenvalues.len()
            )));
        }
        if r.eigenvalues.iter().any(|l| !(*l > 0.0))
            || r.eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::Parse(
                "eigenvalues must be positive and non-increasing".into(),
            ));
        }
        Ok(EigenBasis {
            dim: r.dim,
            weights: r.weights.into(),
            mean: r.mean,
            eigenvalues: r.eigenvalues,
            eigenfields: r.eigenfields.concat(),
            k: r.k,
            n0: r.n0,
        })
    }
}

/// Retained scores and the two chart statistics for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartStatistics {
    pub t2: f64,
    pub spe: f64,
    /// ξ₁..ξ_K.
    pub scores: Vec<f64>,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn ref_weights(&self) -> &Arc<[f64]> {
        &self.weights
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of calibration fields the basis was fitted on.
    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Σₘ λₘ over the retained rank.
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn mean_field(&self) -> TangentField {
        TangentField::new(self.dim, self.mean.clone(), self.weights.clone())
            .expect("validated at fit")
    }

    /// The m-th eigenfield (0-based).
    pub fn eigenfield(&self, m: usize) -> TangentField {
        let p = self.mean.len();
        TangentField::new(
            self.dim,
            self.eigenfields[m * p..(m + 1) * p].to_vec(),
            self.weights.clone(),
        )
        .expect("validated at fit")
    }

    /// Copy with a different truncation level.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::config(format!(
                "K = {k} outside 1..={}",
                self.rank()
            )));
        }
        Ok(Self { k, ..self.clone() })
    }

    fn check_grid(&self, field: &TangentField) -> Result<()> {
        if field.dim() != self.dim || field.atoms() != self.atoms() {
            return Err(Error::dim(format!(
                "field on {}x{} grid, basis on {}x{}",
                field.atoms(),
                field.dim(),
                self.atoms(),
                self.dim
            )));
        }
        if !Arc::ptr_eq(field.ref_weights(), &self.weights)
            && field.ref_weights()[..] != self.weights[..]
        {
            return Err(Error::dim(
                "field and basis use different reference weights",
            ));
        }
        Ok(())
    }

    /// Centered field `Δ = field − v̄` as a flat vector.
    fn centered(&self, field: &TangentField) -> Result<Vec<f64>> {
        self.check_grid(field)?;
        Ok(field
            .vectors()
            .iter()
            .zip(&self.mean)
            .map(|(v, m)| v - m)
            .collect())
    }

    fn scores_of(&self, delta: &[f64], upto: usize) -> Vec<f64> {
        let p = self.mean.len();
        self.eigenfields
            .chunks(p)
            .take(upto)
            .map(|phi| weighted_dot(&self.weights, self.dim, delta, phi))
            .collect()
    }

    /// Scores, T² and SPE of one field.
    pub fn chart_statistics(&self, field: &TangentField) -> Result<ChartStatistics> {
        let delta = self.centered(field)?;
        let scores = self.scores_of(&delta, self.k);
        let energy = weighted_dot(&self.weights, self.dim, &delta, &delta);
        let spe = (energy - scores.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        Ok(ChartStatistics {
            t2: t2_statistic(self, &scores),
            spe,
            scores,
        })
    }
}

/// Fit the basis with the default K rule.
pub fn fit_basis(fields: &[TangentField]) -> Result<EigenBasis> {
    fit_basis_with(fields, KRule::default())
}

/// Which matrix to diagonalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// The smaller of the two.
    #[default]
    Auto,
    /// `n₀ × n₀` Gram matrix of centered fields.
    Gram,
    /// `m·d × m·d` weighted covariance.
    Primal,
}

/// Fit mean field and eigenfields of the empirical covariance operator.
pub fn fit_basis_with(fields: &[TangentField], rule: KRule) -> Result<EigenBasis> {
    fit_basis_via(fields, rule, Route::Auto)
}

/// [`fit_basis_with`] with an explicit choice of route.
pub fn fit_basis_via(fields: &[TangentField], rule: KRule, route: Route) -> Result<EigenBasis> {
    let n0 = fields.len();
    if n0 < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n0 });
    }
    let first = &fields[0];
    for f in &fields[1..] {
        first.check_compatible(f)?;
    }
    let (d, w) = (first.dim(), first.ref_weights().clone());
    let p = first.vectors().len();
    let mut mean = vec![0.0; p];
    for f in fields {
        mean.iter_mut().zip(f.vectors()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n0 as f64);

    // Z[t] = √w ⊙ (v_t − v̄)
    let sqrt_w: Vec<f64> = w
        .iter()
        .flat_map(|wi| std::iter::repeat_n(wi.sqrt(), d))
        .collect();
    let z = DMatrix::from_fn(n0, p, |t, j| (fields[t].vectors()[j] - mean[j]) * sqrt_w[j]);
    let denom = (n0 - 1) as f64;

    let primal = match route {
        Route::Auto => p <= n0,
        Route::Gram => false,
        Route::Primal => true,
    };
    let (values, fields_flat) = if primal {
        primal_route(&z, denom, &sqrt_w)
    } else {
        gram_route(&z, denom, &sqrt_w)
    };

    let scale: f64 =
        mean.iter().map(|x| x * x).sum::<f64>() + z.iter().map(|x| x * x).sum::<f64>() / n0 as f64;
    let lambda1 = values.first().copied().unwrap_or(0.0);
    if !(lambda1 > 1e-24 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateVariance);
    }
    let r = values
        .iter()
        .take_while(|&&l| l >= lambda1 * EIGEN_FLOOR)
        .count();
    let eigenvalues = values[..r].to_vec();
    let eigenfields = fields_flat[..r * p].to_vec();

    let mut basis = EigenBasis {
        dim: d,
        weights: w,
        mean,
        eigenvalues,
        eigenfields,
        k: 1,
        n0,
    };
    basis.k = match rule {
        KRule::Fixed(k) => k.clamp(1, r),
        KRule::Variance(frac) => select_k(&basis, frac)?.min((n0 / 2).max(1)),
    };
    Ok(basis)
}

/// Eigenpairs in decreasing order, skipping non-positive values.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = eig.eigenvectors.select_columns(&order);
    (values, vecs)
}

/// Flip sign so the largest-magnitude coordinate is positive.
fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn gram_route(z: &DMatrix<f64>, denom: f64, sqrt_w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gram = z * z.transpose() / denom;
    let (values, u) = sorted_eigen(gram);
    let p = z.ncols();
    let mut out = Vec::with_capacity(values.len() * p);
    for (m, &lambda) in values.iter().enumerate() {
        // φ = Σₜ Uₜ ṽₜ / √((n₀−1)λ), mapped back from the √w scaling
        let coeff = u.column(m) / (denom * lambda).sqrt();
        let mut phi: Vec<f64> = (z.transpose() * coeff).iter().copied().collect();
        phi.iter_mut().zip(sqrt_w).for_each(|(x, s)| *x /= s);
        fix_sign(&mut phi);
        out.extend(phi);
    }
    (values, out)
}

fn primal_route(z: &DMatrix<f64>, denom: f64, sqrt_w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cov = z.transpose() * z / denom;
    let (values, e) = sorted_eigen(cov);
    let mut out = Vec::with_capacity(values.len() * z.ncols());
    for m in 0..values.len() {
        let mut phi: Vec<f64> = e.column(m).iter().zip(sqrt_w).map(|(x, s)| x / s).collect();
        fix_sign(&mut phi);
        out.extend(phi);
    }
    (values, out)
}

/// Scores `ξₘ = ⟨field − v̄, φₘ⟩` for every retained direction m = 1..r.
pub fn project_scores(basis: &EigenBasis, field: &TangentField) -> Result<Vec<f64>> {
    let delta = basis.centered(field)?;
    Ok(basis.scores_of(&delta, basis.rank()))
}

/// `Σ_{m≤K} ξₘ² / λₘ`; extra scores beyond K are ignored.
pub fn t2_statistic(basis: &EigenBasis, scores: &[f64]) -> f64 {
    scores
        .iter()
        .zip(&basis.eigenvalues)
        .take(basis.k)
        .map(|(x, l)| x * x / l)
        .sum()
}

/// `‖Δ‖² − Σ_{m≤K} ξₘ²`, clamped at zero.
pub fn spe_statistic(basis: &EigenBasis, field: &TangentField) -> Result<f64> {
    Ok(basis.chart_statistics(field)?.spe)
}

/// `Σ_{m>K} λₘ`.
pub fn tail_energy(basis: &EigenBasis, k: usize) -> f64 {
    basis.eigenvalues.iter().skip(k).sum()
}

/// Smallest K whose leading eigenvalues explain at least `fraction` of the
/// retained variance.
pub fn select_k(basis: &EigenBasis, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!(
            "variance fraction {fraction} outside (0, 1]"
        )));
    }
    let total = basis.total_variance();
    let mut acc = 0.0;
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        acc += l;
        // relative slack so fraction = 1 reaches the last index despite rounding
        if acc >= fraction * total * (1.0 - 1e-12) {
            return Ok(i + 1);
        }
    }
    Ok(basis.rank())
}
