//! Calibration and online monitoring with the two-chart OR rule.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{fit_barycenter, BarycenterConfig};
use crate::error::{Error, Result};
use crate::mfpca::{fit_basis_with, ChartStatistics, EigenBasis, KRule, DEFAULT_VARIANCE_FRACTION};
use crate::ot::{
    barycentric_projection, tangent_field_on, EmpiricalMeasure, SolverConfig, TangentField,
};

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub alpha_t2: f64,
    pub alpha_spe: f64,
    /// Fixed truncation level; `None` selects K by explained variance.
    pub k: Option<usize>,
    pub variance_fraction: f64,
    pub barycenter: BarycenterConfig,
    pub solver: SolverConfig,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            alpha_t2: 0.01,
            alpha_spe: 0.01,
            k: None,
            variance_fraction: DEFAULT_VARIANCE_FRACTION,
            barycenter: BarycenterConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_t2", self.alpha_t2), ("alpha_spe", self.alpha_spe)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(format!("{name} = {a} outside (0, 1)")));
            }
        }
        if self.k == Some(0) {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return Err(Error::config("variance_fraction outside (0, 1]"));
        }
        self.barycenter.validate()?;
        self.solver.validate()
    }

    fn k_rule(&self) -> KRule {
        match self.k {
            Some(k) => KRule::Fixed(k),
            None => KRule::Variance(self.variance_fraction),
        }
    }
}

/// Index `k = ⌈(1−α)·n⌉` of the order statistic used as threshold.
///
/// A product that lands within rounding of an integer is treated as that
/// integer, so `α = 0.05, n = 100` gives 95 rather than 96.
pub fn threshold_index(n: usize, alpha: f64) -> Result<usize> {
    let x = (1.0 - alpha) * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    } as usize;
    if k == 0 || k > n {
        return Err(Error::config(format!(
            "alpha = {alpha} gives order index {k} outside 1..={n}"
        )));
    }
    Ok(k)
}

/// The k-th smallest value (1-based).
pub fn order_statistic(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    *x
}

/// `n₀ + 1 + 1/(α_T² + α_SPE + 2/(n₀+1))`.
pub fn arl_lower_bound(n0: usize, alpha_t2: f64, alpha_spe: f64) -> f64 {
    let n1 = n0 as f64 + 1.0;
    n1 + 1.0 / (alpha_t2 + alpha_spe + 2.0 / n1)
}

/// Which chart(s) exceeded their threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    None,
    T2,
    Spe,
    Both,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::None => "none",
            Trigger::T2 => "t2",
            Trigger::Spe => "spe",
            Trigger::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorUpdate {
    pub t: usize,
    pub stats: ChartStatistics,
    pub alarm: bool,
    pub triggered_by: Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t2: f64,
    pub spe: f64,
}

/// A calibrated detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorModel {
    format_version: u32,
    barycenter: EmpiricalMeasure,
    basis: EigenBasis,
    thresholds: Thresholds,
    alpha_t2: f64,
    alpha_spe: f64,
    n0: usize,
    config: MonitorConfig,
    /// In-sample statistics of the calibration batches.
    reference: Vec<(f64, f64)>,
    barycenter_functional: f64,
}

/// Tangent field of `measure` at the barycenter.
fn field_at(
    bary: &EmpiricalMeasure,
    weights: &Arc<[f64]>,
    measure: &EmpiricalMeasure,
    solver: &SolverConfig,
) -> Result<TangentField> {
    let t = solver.solve(bary, measure)?;
    let proj = barycentric_projection(&t.coupling, measure)?;
    tangent_field_on(&proj, bary, weights.clone())
}

/// Fit barycenter, eigenbasis and thresholds on `n₀` pre-change batches.
pub fn calibrate(measures: &[EmpiricalMeasure], config: &MonitorConfig) -> Result<MonitorModel> {
    config.validate()?;
    let n0 = measures.len();
    if n0 < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n0 });
    }
    let kt = threshold_index(n0, config.alpha_t2)?;
    let ks = threshold_index(n0, config.alpha_spe)?;
    let fit = fit_barycenter(measures, &config.barycenter, &config.solver)?;
    let bary = fit.measure;
    let weights: Arc<[f64]> = Arc::from(bary.weights());
    let fields: Vec<TangentField> = measures
        .par_iter()
        .enumerate()
        .map(|(t, mu)| field_at(&bary, &weights, mu, &config.solver).map_err(|e| e.at_time(t + 1)))
        .collect::<Result<_>>()?;
    let basis = fit_basis_with(&fields, config.k_rule())?;
    let reference: Vec<(f64, f64)> = fields
        .iter()
        .map(|f| basis.chart_statistics(f).map(|s| (s.t2, s.spe)))
        .collect::<Result<_>>()?;
    let t2s: Vec<f64> = reference.iter().map(|r| r.0).collect();
    let spes: Vec<f64> = reference.iter().map(|r| r.1).collect();
    let thresholds = Thresholds {
        t2: order_statistic(&t2s, kt),
        spe: order_statistic(&spes, ks),
    };
    log::info!(
        "calibrated on {n0} batches: K = {} of rank {}, h_T2 = {:.4e}, h_SPE = {:.4e}",
        basis.k(),
        basis.rank(),
        thresholds.t2,
        thresholds.spe
    );
    Ok(MonitorModel {
        format_version: MODEL_FORMAT_VERSION,
        barycenter: bary,
        basis,
        thresholds,
        alpha_t2: config.alpha_t2,
        alpha_spe: config.alpha_spe,
        n0,
        config: config.clone(),
        reference,
        barycenter_functional: fit.functional,
    })
}

impl MonitorModel {
    pub fn barycenter(&self) -> &EmpiricalMeasure {
        &self.barycenter
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha_t2, self.alpha_spe)
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn barycenter_functional(&self) -> f64 {
        self.barycenter_functional
    }

    /// In-sample `(T², SPE)` of every calibration batch.
    pub fn reference_statistics(&self) -> &[(f64, f64)] {
        &self.reference
    }

    /// Copy with overridden thresholds; infinite values are allowed so that
    /// tests can force "never" or "always" alarms.
    pub fn with_thresholds(&self, t2: f64, spe: f64) -> Self {
        Self {
            thresholds: Thresholds { t2, spe },
            ..self.clone()
        }
    }

    /// Chart statistics of one batch.
    pub fn statistics(&self, measure: &EmpiricalMeasure) -> Result<ChartStatistics> {
        if measure.dim() != self.barycenter.dim() {
            return Err(Error::dim(format!(
                "batch has dimension {}, model {}",
                measure.dim(),
                self.barycenter.dim()
            )));
        }
        let field = field_at(
            &self.barycenter,
            self.basis.ref_weights(),
            measure,
            &self.config.solver,
        )?;
        self.basis.chart_statistics(&field)
    }

    /// Apply the OR rule to precomputed statistics.
    pub fn decide(&self, t: usize, stats: ChartStatistics) -> MonitorUpdate {
        let a = stats.t2 > self.thresholds.t2;
        let b = stats.spe > self.thresholds.spe;
        let triggered_by = match (a, b) {
            (true, true) => Trigger::Both,
            (true, false) => Trigger::T2,
            (false, true) => Trigger::Spe,
            (false, false) => Trigger::None,
        };
        MonitorUpdate {
            t,
            stats,
            alarm: a || b,
            triggered_by,
        }
    }

    /// `max(T²/h_T², SPE/h_SPE)`: the alarm rule is `score > 1`, and scaling
    /// both thresholds by `s` is the rule `score > s`.
    pub fn normalized_score(&self, stats: &ChartStatistics) -> f64 {
        let ratio = |x: f64, h: f64| {
            if h > 0.0 {
                x / h
            } else if x > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        };
        ratio(stats.t2, self.thresholds.t2).max(ratio(stats.spe, self.thresholds.spe))
    }

    /// Monitor one batch.
    pub fn step(&self, measure: &EmpiricalMeasure, t: usize) -> Result<MonitorUpdate> {
        let stats = self.statistics(measure).map_err(|e| e.at_time(t))?;
        Ok(self.decide(t, stats))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.barycenter.len() != m.basis.atoms() || m.barycenter.dim() != m.basis.dim() {
            return Err(Error::Parse(
                "barycenter and eigenbasis grids disagree".into(),
            ));
        }
        Ok(m)
    }
}

/// A calibrated chart reduced to one score per batch, normalized so that
/// its own alarm rule is `score > 1`. Multiplying the thresholds by `s`
/// gives the rule `score > s`, which is how charts are matched to a common
/// in-control run length.
pub trait Chart: Sync {
    fn score(&self, batch: &EmpiricalMeasure, t: usize) -> Result<f64>;
}

impl Chart for MonitorModel {
    fn score(&self, batch: &EmpiricalMeasure, t: usize) -> Result<f64> {
        let stats = self.statistics(batch).map_err(|e| e.at_time(t))?;
        Ok(self.normalized_score(&stats))
    }
}

/// First alarm of a monitored stream, or censoring at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunLength {
    Alarm(usize),
    Censored(usize),
}

impl RunLength {
    pub fn alarm_time(self) -> Option<usize> {
        match self {
            RunLength::Alarm(t) => Some(t),
            RunLength::Censored(_) => None,
        }
    }

    /// `min(τ, H)`.
    pub fn truncated(self) -> usize {
        match self {
            RunLength::Alarm(t) | RunLength::Censored(t) => t,
        }
    }
}

/// Monitor batches `t = 1, 2, …` until the first alarm or `horizon` batches.
/// A stream that ends early is censored at its length.
pub fn run_length<I>(model: &MonitorModel, stream: I, horizon: usize) -> Result<RunLength>
where
    I: IntoIterator<Item = Result<EmpiricalMeasure>>,
{
    let mut seen = 0;
    for (i, mu) in stream.into_iter().take(horizon).enumerate() {
        let t = i + 1;
        seen = t;
        if model.step(&mu.map_err(|e| e.at_time(t))?, t)?.alarm {
            return Ok(RunLength::Alarm(t));
        }
    }
    Ok(RunLength::Censored(seen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn order_index() {
        assert_eq!(threshold_index(100, 0.05).unwrap(), 95);
        assert_eq!(threshold_index(200, 0.01).unwrap(), 198);
        assert_eq!(threshold_index(10, 0.01).unwrap(), 10);
        assert_eq!(threshold_index(7, 0.3).unwrap(), 5);
    }

    #[test]
    fn order_statistic_values() {
        assert_eq!(order_statistic(&[3.0, 1.0, 2.0], 1), 1.0);
        assert_eq!(order_statistic(&[3.0, 1.0, 2.0], 3), 3.0);
        assert_eq!(order_statistic(&[0.7; 5], 4), 0.7);
    }

    #[test]
    fn bound_values() {
        assert_relative_eq!(
            arl_lower_bound(100, 0.01, 0.01),
            101.0 + 1.0 / (0.02 + 2.0 / 101.0)
        );
        assert!((arl_lower_bound(100, 0.01, 0.01) - 126.12).abs() < 0.01);
        assert!((arl_lower_bound(100, 1e-15, 1e-15) - 151.5).abs() < 1e-9);
        assert!((arl_lower_bound(200, 0.01, 0.01) - 234.39).abs() < 0.01);
    }

    #[test]
    fn config_rejects_bad_alpha() {
        let c = MonitorConfig {
            alpha_t2: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = MonitorConfig {
            alpha_spe: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn too_few_batches() {
        let mu = EmpiricalMeasure::from_samples(1, vec![0.0, 1.0]).unwrap();
        let err = calibrate(&[mu.clone(), mu], &MonitorConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples { needed: 3, got: 2 }
        ));
    }
}
