//! Monte-Carlo comparison of detectors at matched in-control run length.
//!
//! Every replication draws one stream, calibrates each detector on its
//! first `n0` batches and scores `null_length` further in-control batches.
//! A detector's per-batch score is normalized so that its own rule alarms
//! at `score > 1`; one multiplier `s` per (detector, target) is found by
//! bisection so that the pooled in-control run length `exposure / alarms`
//! matches the target. The same stream with a change right after
//! `n0 + kappa_offset` then gives the detection delays.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, DetectorKind, HarnessConfig};
use crate::baselines::{HotellingMeanChart, MultinomialMaxDev, PoissonCChart};
use crate::detector::{calibrate, Chart, MonitorConfig};
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;
use crate::seeds::derive_seed;
use crate::stats::{jackknife_se, mean, std_error};
use crate::synth::{StreamGenerator, StreamSpec};

/// Version of the report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One (detector, target) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointReport {
    pub detector: DetectorKind,
    pub target_arl0: f64,
    /// Whether the bisection reached the target within tolerance.
    pub matched: bool,
    /// Threshold multiplier.
    pub scale: f64,
    pub arl0: f64,
    pub arl0_se: f64,
    /// Mean delay `τ − κ` over detected changes.
    pub arl1: f64,
    pub arl1_se: f64,
    /// Fraction of replications with an alarm after the change, within the horizon.
    pub detection_rate: f64,
    /// Fraction censored at the horizon without an alarm.
    pub censored_rate: f64,
    /// Per-batch in-control alarm rate, `1 / arl0`.
    pub false_alarm_rate: f64,
    pub censored: usize,
    /// Replications that alarmed before the change (excluded from delays).
    pub early_alarms: usize,
    pub replications: usize,
    pub horizon: usize,
    pub delays: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub n0: usize,
    pub points: Vec<PointReport>,
    pub wall_clock_s: f64,
}

impl BenchmarkReport {
    pub fn point(&self, detector: DetectorKind, target: f64) -> Option<&PointReport> {
        self.points
            .iter()
            .find(|p| p.detector == detector && (p.target_arl0 - target).abs() < 1e-9)
    }

    pub fn all_matched(&self) -> bool {
        self.points.iter().all(|p| p.matched)
    }

    /// Per-point rows for plotting trade-off curves.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "schema_version",
            "detector",
            "target_arl0",
            "matched",
            "scale",
            "arl0",
            "arl0_se",
            "arl1",
            "arl1_se",
            "detection_rate",
            "censored_rate",
            "false_alarm_rate",
            "censored",
            "early_alarms",
            "replications",
        ])?;
        for p in &self.points {
            w.write_record([
                self.schema_version.to_string(),
                p.detector.name().to_string(),
                p.target_arl0.to_string(),
                p.matched.to_string(),
                p.scale.to_string(),
                p.arl0.to_string(),
                p.arl0_se.to_string(),
                p.arl1.to_string(),
                p.arl1_se.to_string(),
                p.detection_rate.to_string(),
                p.censored_rate.to_string(),
                p.false_alarm_rate.to_string(),
                p.censored.to_string(),
                p.early_alarms.to_string(),
                p.replications.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Inputs of one benchmark run.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub seed: u64,
    pub n0: usize,
    pub stream: StreamSpec,
    pub monitor: MonitorConfig,
    pub config: BenchmarkConfig,
}

impl Benchmark {
    pub fn from_config(c: &HarnessConfig) -> Result<Self> {
        c.validate()?;
        Ok(Self {
            seed: c.seed,
            n0: c.n0,
            stream: c.stream()?.clone(),
            monitor: c.monitor.clone(),
            config: c.benchmark.clone(),
        })
    }
}

fn fit_chart(
    kind: DetectorKind,
    cal: &[EmpiricalMeasure],
    b: &Benchmark,
) -> Result<Box<dyn Chart + Send>> {
    Ok(match kind {
        DetectorKind::Idd => Box::new(calibrate(cal, &b.monitor)?),
        DetectorKind::Hotelling => {
            Box::new(HotellingMeanChart::calibrate(cal, b.config.baseline_alpha)?)
        }
        DetectorKind::CChart => Box::new(PoissonCChart::calibrate(cal, b.config.c_chart_width)?),
        DetectorKind::Multinomial => {
            Box::new(MultinomialMaxDev::calibrate(cal, b.config.baseline_alpha)?)
        }
    })
}

/// Calibrated charts and in-control scores of one replication.
struct Replication {
    generator: StreamGenerator,
    charts: Vec<Box<dyn Chart + Send>>,
    /// `null_scores[detector][i]` for batch `n0 + 1 + i`.
    null_scores: Vec<Vec<f64>>,
}

fn run_null(b: &Benchmark, r: usize) -> Result<Replication> {
    let seed = derive_seed(b.seed, &[r as u64]);
    let horizon_len = b.n0 + b.config.null_length;
    let mut spec = b.stream.clone();
    spec.len = spec.len.max(horizon_len);
    spec.kappa = Some(spec.len);
    let generator = StreamGenerator::new(&spec, seed)?;
    let cal: Vec<EmpiricalMeasure> = (1..=b.n0)
        .map(|t| generator.batch(t))
        .collect::<Result<_>>()?;
    let charts: Vec<Box<dyn Chart + Send>> = b
        .config
        .detectors
        .iter()
        .map(|&k| fit_chart(k, &cal, b))
        .collect::<Result<_>>()?;
    let mut null_scores = vec![Vec::with_capacity(b.config.null_length); charts.len()];
    for t in b.n0 + 1..=horizon_len {
        let batch = generator.batch(t)?;
        for (c, scores) in charts.iter().zip(null_scores.iter_mut()) {
            scores.push(c.score(&batch, t)?);
        }
    }
    Ok(Replication {
        generator,
        charts,
        null_scores,
    })
}

fn pooled_arl(groups: &[&Vec<f64>], s: f64) -> f64 {
    let exposure: usize = groups.iter().map(|g| g.len()).sum();
    let alarms: usize = groups
        .iter()
        .map(|g| g.iter().filter(|&&x| x > s).count())
        .sum();
    if alarms == 0 {
        f64::INFINITY
    } else {
        exposure as f64 / alarms as f64
    }
}

/// Multiplier `s` whose pooled in-control run length is within `tol` of
/// `target`, by bisection. Returns `(s, arl0, matched)`.
pub fn match_scale(
    groups: &[&Vec<f64>],
    target: f64,
    tol: f64,
    max_steps: usize,
) -> (f64, f64, bool) {
    let max = groups
        .iter()
        .flat_map(|g| g.iter())
        .copied()
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max);
    let (mut lo, mut hi) = (0.0, max.max(f64::MIN_POSITIVE));
    let mut best = (hi, pooled_arl(groups, hi));
    for _ in 0..max_steps {
        let mid = 0.5 * (lo + hi);
        let arl = pooled_arl(groups, mid);
        if (arl / target - 1.0).abs() <= tol {
            return (mid, arl, true);
        }
        if (arl / target - 1.0).abs() < (best.1 / target - 1.0).abs() {
            best = (mid, arl);
        }
        if arl < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (best.0, best.1, false)
}

/// Post-change outcome of one replication for one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Early,
    Delay(usize),
    Censored,
}

fn run_changed(
    rep: &Replication,
    b: &Benchmark,
    det: usize,
    scales: &[(f64, usize)],
) -> Result<Vec<Outcome>> {
    let kappa = b.n0 + b.config.kappa_offset;
    let gen = rep.generator.with_kappa(kappa);
    let mut out = vec![None; scales.len()];
    let max_h = scales.iter().map(|s| s.1).max().unwrap_or(0);
    for i in 0..max_h {
        let t = b.n0 + 1 + i;
        // in-control part equals the null stream already scored
        let score = if t <= kappa && i < rep.null_scores[det].len() {
            rep.null_scores[det][i]
        } else {
            rep.charts[det].score(&gen.batch(t)?, t)?
        };
        for (k, &(s, h)) in scales.iter().enumerate() {
            if out[k].is_none() && i < h && score > s {
                out[k] = Some(if t <= kappa {
                    Outcome::Early
                } else {
                    Outcome::Delay(t - kappa)
                });
            }
        }
        if out.iter().all(Option::is_some) {
            break;
        }
    }
    Ok(out
        .into_iter()
        .map(|o| o.unwrap_or(Outcome::Censored))
        .collect())
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// Run the benchmark. Unmatched points are reported with `matched = false`.
pub fn run_benchmark(b: &Benchmark) -> Result<BenchmarkReport> {
    b.config.validate()?;
    b.stream.validate()?;
    let start = Instant::now();
    let reps = b.config.replications;
    let pool = pool(b.config.threads)?;
    let replications: Vec<Replication> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_null(b, r))
            .collect::<Result<_>>()
    })?;

    let mut points = Vec::new();
    for (det, &kind) in b.config.detectors.iter().enumerate() {
        let groups: Vec<&Vec<f64>> = replications.iter().map(|r| &r.null_scores[det]).collect();
        let matched: Vec<(f64, f64, bool)> = b
            .config
            .targets
            .iter()
            .map(|&target| match_scale(&groups, target, b.config.tolerance, b.config.max_bisection))
            .collect();
        let scales: Vec<(f64, usize)> = matched
            .iter()
            .zip(&b.config.targets)
            .map(|(m, target)| {
                (
                    m.0,
                    (b.config.kappa_offset as f64 + b.config.horizon_factor * target).ceil()
                        as usize,
                )
            })
            .collect();
        let outcomes: Vec<Vec<Outcome>> = pool.install(|| {
            replications
                .par_iter()
                .map(|rep| run_changed(rep, b, det, &scales))
                .collect::<Result<_>>()
        })?;
        for (k, &target) in b.config.targets.iter().enumerate() {
            let (scale, arl0, ok) = matched[k];
            if !ok {
                log::warn!(
                    "{}: could not match ARL0 {target} (closest {arl0:.1})",
                    kind.name()
                );
            }
            let arl0_se = jackknife_se(&groups, |g| {
                let g: Vec<&Vec<f64>> = g.iter().map(|x| **x).collect();
                pooled_arl(&g, scale)
            });
            let col: Vec<Outcome> = outcomes.iter().map(|o| o[k]).collect();
            let delays: Vec<usize> = col
                .iter()
                .filter_map(|o| match o {
                    Outcome::Delay(d) => Some(*d),
                    _ => None,
                })
                .collect();
            let early = col.iter().filter(|o| **o == Outcome::Early).count();
            let censored = col.iter().filter(|o| **o == Outcome::Censored).count();
            let eligible = (reps - early).max(1) as f64;
            let dv: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
            points.push(PointReport {
                detector: kind,
                target_arl0: target,
                matched: ok,
                scale,
                arl0,
                arl0_se,
                arl1: if dv.is_empty() { f64::NAN } else { mean(&dv) },
                arl1_se: std_error(&dv),
                detection_rate: delays.len() as f64 / eligible,
                censored_rate: censored as f64 / eligible,
                false_alarm_rate: 1.0 / arl0,
                censored,
                early_alarms: early,
                replications: reps,
                horizon: scales[k].1,
                delays,
            });
        }
    }
    points.sort_by(|a, b| {
        a.detector
            .cmp(&b.detector)
            .then(a.target_arl0.total_cmp(&b.target_arl0))
    });
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: b.stream.scenario.name().to_string(),
        seed: b.seed,
        n0: b.n0,
        points,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_arl_counts_strict_exceedances() {
        let a = vec![0.5, 1.5, 2.0, 0.1];
        let b = vec![1.0, 0.2];
        assert_eq!(pooled_arl(&[&a, &b], 1.0), 3.0);
        assert_eq!(pooled_arl(&[&a, &b], 5.0), f64::INFINITY);
    }

    #[test]
    fn bisection_hits_reachable_target() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (s, arl, ok) = match_scale(&[&scores], 100.0, 0.05, 40);
        assert!(ok);
        assert!((arl / 100.0 - 1.0).abs() <= 0.05);
        assert!(s > 0.98 && s < 0.995);
    }

    #[test]
    fn bisection_reports_unreachable_target() {
        let scores = vec![1.0; 10];
        let (_, _, ok) = match_scale(&[&scores], 3.0, 0.05, 40);
        assert!(!ok);
    }
}
