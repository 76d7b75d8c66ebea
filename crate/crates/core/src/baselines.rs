//! Reference charts on batch summaries.
//!
//! * [`HotellingMeanChart`]: Mahalanobis distance of the batch mean.
//! * [`PoissonCChart`]: batch total against a `c̄ ± L√c̄` band.
//! * [`MultinomialMaxDev`]: largest standardized category-share deviation.
//!
//! Thresholds of the first and last use the same order-statistic rule as
//! the main detector, on in-sample calibration statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detector::{order_statistic, threshold_index, Chart};
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;

fn batch_size(m: &EmpiricalMeasure) -> Result<usize> {
    m.n_samples()
        .ok_or_else(|| Error::dim("batch does not record its sample count"))
}

fn ratio(x: f64, h: f64) -> f64 {
    if h > 0.0 {
        x / h
    } else if x > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Hotelling T² chart on batch means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HotellingMeanChart {
    mean: Vec<f64>,
    /// Row-major inverse covariance of the batch means.
    precision: Vec<f64>,
    threshold: f64,
    ridge: f64,
}

impl HotellingMeanChart {
    /// Fit on `n₀ ≥ d + 2` calibration batches. A singular covariance gets
    /// a ridge of `1e-8 · trace / d`.
    pub fn calibrate(batches: &[EmpiricalMeasure], alpha: f64) -> Result<Self> {
        let d = batches
            .first()
            .ok_or_else(|| Error::EmptyInput("no calibration batches".into()))?
            .dim();
        let n0 = batches.len();
        if n0 < d + 2 {
            return Err(Error::InsufficientSamples {
                needed: d + 2,
                got: n0,
            });
        }
        if batches.iter().any(|b| b.dim() != d) {
            return Err(Error::dim("calibration batches have differing dimensions"));
        }
        let means: Vec<Vec<f64>> = batches.iter().map(EmpiricalMeasure::mean).collect();
        let mut mu = vec![0.0; d];
        for m in &means {
            mu.iter_mut().zip(m).for_each(|(a, x)| *a += x / n0 as f64);
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for m in &means {
            let c = DVector::from_iterator(d, m.iter().zip(&mu).map(|(x, u)| x - u));
            cov += &c * c.transpose();
        }
        cov /= (n0 - 1) as f64;
        let mut ridge = 0.0;
        let precision = match cov.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => {
                ridge = 1e-8 * cov.trace() / d as f64;
                log::warn!("batch-mean covariance is singular; adding ridge {ridge:.3e}");
                let reg = &cov + DMatrix::identity(d, d) * ridge.max(f64::MIN_POSITIVE);
                reg.cholesky().ok_or(Error::DegenerateVariance)?.inverse()
            }
        };
        let mut chart = Self {
            mean: mu,
            precision: precision.transpose().as_slice().to_vec(),
            threshold: 0.0,
            ridge,
        };
        let stats: Vec<f64> = means.iter().map(|m| chart.statistic_of_mean(m)).collect();
        chart.threshold = order_statistic(&stats, threshold_index(n0, alpha)?);
        Ok(chart)
    }

    fn statistic_of_mean(&self, m: &[f64]) -> f64 {
        let d = self.mean.len();
        let c: Vec<f64> = m.iter().zip(&self.mean).map(|(x, u)| x - u).collect();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += c[i] * self.precision[i * d + j] * c[j];
            }
        }
        s
    }

    /// `(x̄ₜ − μ̂)ᵀ Σ̂⁻¹ (x̄ₜ − μ̂)`.
    pub fn statistic(&self, batch: &EmpiricalMeasure) -> Result<f64> {
        if batch.dim() != self.mean.len() {
            return Err(Error::dim("batch dimension differs from the chart"));
        }
        Ok(self.statistic_of_mean(&batch.mean()))
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Statistic and strict-exceedance alarm.
    pub fn step(&self, batch: &EmpiricalMeasure) -> Result<(f64, bool)> {
        let s = self.statistic(batch)?;
        Ok((s, s > self.threshold))
    }
}

impl Chart for HotellingMeanChart {
    fn score(&self, batch: &EmpiricalMeasure, t: usize) -> Result<f64> {
        Ok(ratio(
            self.statistic(batch).map_err(|e| e.at_time(t))?,
            self.threshold,
        ))
    }
}

/// Shewhart band on batch totals of count data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonCChart {
    c_bar: f64,
    width: f64,
}

impl PoissonCChart {
    /// Estimate `c̄` as the mean calibration total; the band is
    /// `[max(0, c̄ − L√c̄), c̄ + L√c̄]`.
    pub fn calibrate(batches: &[EmpiricalMeasure], width: f64) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::EmptyInput("no calibration batches".into()));
        }
        if !(width > 0.0) {
            return Err(Error::config("band width must be positive"));
        }
        let totals: Vec<f64> = batches.iter().map(Self::total).collect::<Result<_>>()?;
        Ok(Self::new(
            totals.iter().sum::<f64>() / totals.len() as f64,
            width,
        ))
    }

    pub fn new(c_bar: f64, width: f64) -> Self {
        Self { c_bar, width }
    }

    /// `Sₜ = Σᵢ xₜᵢ`.
    pub fn total(batch: &EmpiricalMeasure) -> Result<f64> {
        if batch.dim() != 1 {
            return Err(Error::dim("count chart needs one-dimensional batches"));
        }
        let n = batch_size(batch)?;
        Ok((batch.mean()[0] * n as f64).round())
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn band(&self) -> (f64, f64) {
        let h = self.width * self.c_bar.sqrt();
        ((self.c_bar - h).max(0.0), self.c_bar + h)
    }

    pub fn alarm_for_total(&self, s: f64) -> bool {
        let (lo, hi) = self.band();
        s < lo || s > hi
    }

    pub fn step(&self, batch: &EmpiricalMeasure) -> Result<(f64, bool)> {
        let s = Self::total(batch)?;
        Ok((s, self.alarm_for_total(s)))
    }
}

impl Chart for PoissonCChart {
    fn score(&self, batch: &EmpiricalMeasure, t: usize) -> Result<f64> {
        let s = Self::total(batch).map_err(|e| e.at_time(t))?;
        Ok(ratio(
            (s - self.c_bar).abs(),
            self.width * self.c_bar.sqrt(),
        ))
    }
}

/// Maximum absolute standardized deviation of category shares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultinomialMaxDev {
    categories: Vec<f64>,
    p0: Vec<f64>,
    threshold: f64,
}

impl MultinomialMaxDev {
    /// Categories and `p₀` are the pooled calibration frequencies; the
    /// threshold is the usual order statistic of in-sample `Zₜ`.
    pub fn calibrate(batches: &[EmpiricalMeasure], alpha: f64) -> Result<Self> {
        let n0 = batches.len();
        if n0 == 0 {
            return Err(Error::EmptyInput("no calibration batches".into()));
        }
        let mut counts: Vec<(f64, f64)> = Vec::new();
        let mut total = 0.0;
        for b in batches {
            if b.dim() != 1 {
                return Err(Error::dim(
                    "categorical chart needs one-dimensional batches",
                ));
            }
            let n = batch_size(b)? as f64;
            for (x, w) in b.points().iter().zip(b.weights()) {
                match counts.iter_mut().find(|(c, _)| c == x) {
                    Some(e) => e.1 += w * n,
                    None => counts.push((*x, w * n)),
                }
            }
            total += n;
        }
        counts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let categories = counts.iter().map(|c| c.0).collect();
        let p0 = counts.iter().map(|c| c.1 / total).collect();
        let mut chart = Self::with_p0(categories, p0)?;
        let stats: Vec<f64> = batches
            .iter()
            .map(|b| chart.statistic(b))
            .collect::<Result<_>>()?;
        chart.threshold = order_statistic(&stats, threshold_index(n0, alpha)?);
        Ok(chart)
    }

    /// Chart with known category law and no threshold yet (`h = 0`).
    pub fn with_p0(categories: Vec<f64>, p0: Vec<f64>) -> Result<Self> {
        if categories.len() != p0.len() || categories.is_empty() {
            return Err(Error::dim("need one probability per category"));
        }
        Ok(Self {
            categories,
            p0,
            threshold: 0.0,
        })
    }

    pub fn set_threshold(&mut self, h: f64) {
        self.threshold = h;
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    /// `Zₜ = maxⱼ |p̂ₜⱼ − p₀ⱼ| / √(p₀ⱼ(1 − p₀ⱼ)/N)`; categories with
    /// `p₀ⱼ ∈ {0, 1}` are skipped.
    pub fn statistic(&self, batch: &EmpiricalMeasure) -> Result<f64> {
        if batch.dim() != 1 {
            return Err(Error::dim(
                "categorical chart needs one-dimensional batches",
            ));
        }
        let n = batch_size(batch)? as f64;
        let mut z = 0.0f64;
        for (c, &p) in self.categories.iter().zip(&self.p0) {
            if p <= 0.0 || p >= 1.0 {
                log::warn!("category {c} has reference share {p}; skipped");
                continue;
            }
            let share: f64 = batch
                .points()
                .iter()
                .zip(batch.weights())
                .filter(|(x, _)| *x == c)
                .map(|(_, w)| *w)
                .sum();
            z = z.max((share - p).abs() / (p * (1.0 - p) / n).sqrt());
        }
        Ok(z)
    }

    pub fn step(&self, batch: &EmpiricalMeasure) -> Result<(f64, bool)> {
        let z = self.statistic(batch)?;
        Ok((z, z > self.threshold))
    }
}

impl Chart for MultinomialMaxDev {
    fn score(&self, batch: &EmpiricalMeasure, t: usize) -> Result<f64> {
        Ok(ratio(
            self.statistic(batch).map_err(|e| e.at_time(t))?,
            self.threshold,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_samples(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn hotelling_zero_at_mean_and_quadratic() {
        let batches: Vec<_> = [[0.0, 1.0], [1.0, 2.0], [0.5, 0.5], [2.0, 0.0]]
            .iter()
            .map(|b| batch(b))
            .collect();
        let chart = HotellingMeanChart::calibrate(&batches, 0.25).unwrap();
        // batch means 0.5, 1.5, 0.5, 1.0 -> mean 0.875, var 0.229166...
        let var = (0.375f64.powi(2) * 2.0 + 0.625f64.powi(2) + 0.125f64.powi(2)) / 3.0;
        assert!(chart.statistic(&batch(&[0.875])).unwrap().abs() < 1e-12);
        let s = chart.statistic(&batch(&[0.875 + 0.5])).unwrap();
        assert!((s - 0.25 / var).abs() < 1e-9);
        let s2 = chart.statistic(&batch(&[0.875 + 1.0])).unwrap();
        assert!((s2 / s - 4.0).abs() < 1e-9);
    }

    #[test]
    fn hotelling_needs_enough_batches() {
        let b = EmpiricalMeasure::from_samples(2, vec![0.0, 1.0]).unwrap();
        let err = HotellingMeanChart::calibrate(&[b.clone(), b.clone(), b], 0.1).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples { needed: 4, got: 3 }
        ));
    }

    #[test]
    fn c_chart_band() {
        let chart = PoissonCChart::new(100.0, 3.0);
        assert!(!chart.alarm_for_total(100.0));
        assert!(chart.alarm_for_total(140.0));
        assert!(chart.alarm_for_total(69.0));
        assert_eq!(chart.band(), (70.0, 130.0));
        let tiny = PoissonCChart::new(4.0, 3.0);
        assert_eq!(tiny.band().0, 0.0);
    }

    #[test]
    fn c_chart_total_uses_sample_count() {
        let b = batch(&[1.0, 1.0, 3.0, 0.0]);
        assert_eq!(PoissonCChart::total(&b).unwrap(), 5.0);
    }

    #[test]
    fn multinomial_formula() {
        let chart = MultinomialMaxDev::with_p0(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let even = batch(&[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(chart.statistic(&even).unwrap(), 0.0);
        // N = 4: se = 0.25, share 0.75 -> z = 1
        let skew = batch(&[1.0, 1.0, 1.0, 2.0]);
        assert!((chart.statistic(&skew).unwrap() - 1.0).abs() < 1e-12);
    }
}
