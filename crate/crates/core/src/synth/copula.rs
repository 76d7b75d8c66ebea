//! Iman–Conover reordering towards an equicorrelated Gaussian copula.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seeds::rng_for;

fn pearson(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = m.shape();
    let mut centered = m.clone();
    for j in 0..d {
        let mean = m.column(j).sum() / n as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered;
    DMatrix::from_fn(d, d, |a, b| {
        cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()
    })
}

/// Pearson correlation matrix of a flat `N × d` sample.
pub fn sample_correlation(points: &[f64], d: usize) -> DMatrix<f64> {
    pearson(&DMatrix::from_row_slice(points.len() / d, d, points))
}

/// Reorder the columns of `base` (flat `N × d`) so that their ranks follow
/// a Gaussian copula with all pairwise correlations equal to `rho`. Each
/// output column is a permutation of the corresponding input column.
pub fn iman_conover(base: &[f64], d: usize, rho: f64, seed: u64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::config("copula reordering needs d >= 2"));
    }
    if !(rho.abs() < 1.0) || rho <= -1.0 / (d as f64 - 1.0) {
        return Err(Error::config(format!(
            "equicorrelation {rho} is not a valid correlation in dimension {d}"
        )));
    }
    if !base.len().is_multiple_of(d) || base.len() / d < 3 {
        return Err(Error::dim("copula reordering needs at least 3 points"));
    }
    let n = base.len() / d;
    let std_normal = Normal::standard();
    let scores: Vec<f64> = (1..=n)
        .map(|i| std_normal.inverse_cdf(i as f64 / (n + 1) as f64))
        .collect();
    let mut rng = rng_for(seed, &[]);
    let mut s = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut col = scores.clone();
        col.shuffle(&mut rng);
        s.column_mut(j).copy_from_slice(&col);
    }
    let target = DMatrix::from_fn(d, d, |a, b| if a == b { 1.0 } else { rho });
    let p = target
        .cholesky()
        .ok_or_else(|| Error::config("target correlation not positive definite"))?
        .l();
    let q = pearson(&s)
        .cholesky()
        .ok_or_else(|| Error::config("score correlation is singular; increase the sample size"))?
        .l();
    let q_inv = q
        .try_inverse()
        .ok_or_else(|| Error::config("score correlation is singular"))?;
    let t = &s * (p * q_inv).transpose();

    let mut out = vec![0.0; base.len()];
    for j in 0..d {
        let mut sorted: Vec<f64> = (0..n).map(|i| base[i * d + j]).collect();
        sorted.sort_by(f64::total_cmp);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| t[(a, j)].total_cmp(&t[(b, j)]));
        for (rank, &i) in order.iter().enumerate() {
            out[i * d + j] = sorted[rank];
        }
    }
    Ok(out)
}
