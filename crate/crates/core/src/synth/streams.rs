//! Distribution-valued streams with a single change point.
//!
//! Batches are indexed `t = 1, 2, …`; batch `t` is pre-change for
//! `t ≤ κ`. Every batch is generated from its own derived seed, so any
//! batch can be produced on its own, and two streams that differ only in
//! `κ` agree on all batches up to the earlier change point.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::copula::iman_conover;
use super::deform::DeformationParams;
use super::mixture::{reweight, shift_locations, ProductBetaMixture, SampleUniforms};
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;
use crate::seeds::{derive_seed, rng_for};

const LANE_BASE: u64 = 1;
const LANE_DEFORM: u64 = 2;
const LANE_NOISE: u64 = 3;
const LANE_SHIFT: u64 = 4;

/// Number of ordinal categories used by the default drift scenario.
pub const ORDINAL_CATEGORIES: usize = 6;

fn default_delta_loc() -> f64 {
    0.15
}
fn default_delta_mm() -> f64 {
    2.0
}
fn default_rho() -> f64 {
    0.6
}
fn default_true() -> bool {
    true
}
fn default_sigma() -> f64 {
    0.5
}
fn default_lambda0() -> f64 {
    5.0
}
fn default_spike_alpha() -> f64 {
    0.05
}
fn default_k_star() -> u64 {
    25
}
fn default_lambda1() -> f64 {
    15.0
}
fn default_p0() -> Vec<f64> {
    vec![0.3, 0.25, 0.2, 0.12, 0.08, 0.05]
}
fn default_ramp() -> usize {
    20
}

/// What happens at the change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Logit-shift of every Beta coordinate mean by `delta_loc`.
    Barycenter {
        #[serde(default = "default_delta_loc")]
        delta_loc: f64,
    },
    /// Mixture weights multiplied by log-normal factors with log-scale
    /// `delta_mm`. With `pair_antipodal`, components `k` and `k + K/2` share
    /// the geometric mean of their factors, which keeps the default
    /// mixture's mean at the cube center.
    MmReweight {
        #[serde(default = "default_delta_mm")]
        delta_mm: f64,
        #[serde(default = "default_true")]
        pair_antipodal: bool,
    },
    /// Iman–Conover reordering of the base sample to equicorrelation `rho`.
    CopulaShift {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Fresh `N(0, σ²I)` batches; the mean moves to `delta·e₁`.
    GaussianShift {
        #[serde(default = "default_sigma")]
        sigma: f64,
        delta: f64,
    },
    /// `Pois(λ₀)` counts; post-change `(1−α) Pois(λ₀) + α δ_{k*}`.
    PoissonSpike {
        #[serde(default = "default_lambda0")]
        lambda0: f64,
        #[serde(default = "default_spike_alpha")]
        alpha: f64,
        #[serde(default = "default_k_star")]
        k_star: u64,
    },
    /// Post-change `(1−α) Pois(λ_b) + α Pois(λ₁)`, with `λ_b = λ₀` or, when
    /// `mean_matched`, `λ_b = (λ₀ − αλ₁)/(1 − α)` so the mean stays `λ₀`.
    PoissonHeavyTail {
        #[serde(default = "default_lambda0")]
        lambda0: f64,
        #[serde(default = "default_spike_alpha")]
        alpha: f64,
        #[serde(default = "default_lambda1")]
        lambda1: f64,
        #[serde(default)]
        mean_matched: bool,
    },
    /// Categories `1..=M` with law `(1−γₜ) p₀ + γₜ p_shift`, γ ramping from
    /// 0 to 1 over `ramp` batches after the change.
    OrdinalDrift {
        #[serde(default = "default_p0")]
        p0: Vec<f64>,
        #[serde(default = "default_ramp")]
        ramp: usize,
    },
}

impl Scenario {
    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Scenario::Barycenter { .. }
                | Scenario::MmReweight { .. }
                | Scenario::CopulaShift { .. }
        )
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Scenario::PoissonSpike { .. }
                | Scenario::PoissonHeavyTail { .. }
                | Scenario::OrdinalDrift { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Barycenter { .. } => "barycenter",
            Scenario::MmReweight { .. } => "mm_reweight",
            Scenario::CopulaShift { .. } => "copula_shift",
            Scenario::GaussianShift { .. } => "gaussian_shift",
            Scenario::PoissonSpike { .. } => "poisson_spike",
            Scenario::PoissonHeavyTail { .. } => "poisson_heavy_tail",
            Scenario::OrdinalDrift { .. } => "ordinal_drift",
        }
    }
}

fn default_d() -> usize {
    2
}
fn default_n() -> usize {
    100
}
fn default_len() -> usize {
    200
}
fn default_epsilon() -> f64 {
    0.3
}
fn default_beta() -> f64 {
    5.0
}
fn default_j() -> usize {
    3
}

/// Stream description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub scenario: Scenario,
    /// Dimension; discrete scenarios require 1.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Points per batch.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Number of batches emitted by [`StreamGenerator::batches`].
    #[serde(default = "default_len")]
    pub len: usize,
    /// Last pre-change batch; defaults to `len` (no change).
    #[serde(default)]
    pub kappa: Option<usize>,
    /// Base mixture of the continuous scenarios; defaults to
    /// [`ProductBetaMixture::default_for`].
    #[serde(default)]
    pub mixture: Option<ProductBetaMixture>,
    /// Deformation magnitude ε.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Deformation smoothness β.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Number of deformation directions J.
    #[serde(default = "default_j")]
    pub j: usize,
}

impl StreamSpec {
    pub fn new(scenario: Scenario, d: usize, n: usize, len: usize) -> Self {
        Self {
            scenario,
            d,
            n,
            len,
            kappa: None,
            mixture: None,
            epsilon: default_epsilon(),
            beta: default_beta(),
            j: default_j(),
        }
    }

    pub fn with_kappa(mut self, kappa: usize) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn kappa(&self) -> usize {
        self.kappa.unwrap_or(self.len)
    }

    pub fn mixture(&self) -> ProductBetaMixture {
        self.mixture
            .clone()
            .unwrap_or_else(|| ProductBetaMixture::default_for(self.d))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("batches need n >= 2 points"));
        }
        if self.d == 0 {
            return Err(Error::config("stream dimension must be at least 1"));
        }
        let k = self.kappa();
        if k < 1 || k > self.len {
            return Err(Error::config(format!(
                "kappa = {k} outside 1..={}",
                self.len
            )));
        }
        if self.scenario.is_discrete() && self.d != 1 {
            return Err(Error::config(format!(
                "{} streams are one-dimensional",
                self.scenario.name()
            )));
        }
        if self.scenario.is_continuous() {
            let mix = self.mixture();
            mix.validate()?;
            if mix.dim() != self.d {
                return Err(Error::config("mixture dimension differs from d"));
            }
            if self.j == 0 || !(self.epsilon >= 0.0) || !(self.beta > 0.0) {
                return Err(Error::config(
                    "deformation needs j >= 1, epsilon >= 0, beta > 0",
                ));
            }
        }
        match &self.scenario {
            Scenario::Barycenter { delta_loc } if !delta_loc.is_finite() => {
                Err(Error::config("delta_loc must be finite"))
            }
            Scenario::MmReweight { delta_mm, .. } if !(*delta_mm >= 0.0) => {
                Err(Error::config("delta_mm must be >= 0"))
            }
            Scenario::CopulaShift { .. } if self.d == 1 => Err(Error::config(
                "copula_shift needs d >= 2; dependence is undefined in one dimension",
            )),
            Scenario::CopulaShift { rho } if !(rho.abs() < 1.0) => {
                Err(Error::config("rho must satisfy |rho| < 1"))
            }
            Scenario::GaussianShift { sigma, delta } if !(*sigma > 0.0) || !delta.is_finite() => {
                Err(Error::config(
                    "gaussian_shift needs sigma > 0 and finite delta",
                ))
            }
            Scenario::PoissonSpike {
                lambda0,
                alpha,
                k_star,
            } => {
                if !(*lambda0 > 0.0)
                    || !(*alpha >= 0.0 && *alpha < 1.0)
                    || (*k_star as f64) <= *lambda0
                {
                    Err(Error::config(
                        "poisson_spike needs lambda0 > 0, alpha in [0,1), k_star > lambda0",
                    ))
                } else {
                    Ok(())
                }
            }
            Scenario::PoissonHeavyTail {
                lambda0,
                alpha,
                lambda1,
                mean_matched,
            } => {
                if !(*lambda0 > 0.0) || !(*alpha >= 0.0 && *alpha < 1.0) || !(*lambda1 > 0.0) {
                    Err(Error::config(
                        "poisson_heavy_tail needs lambda0, lambda1 > 0 and alpha in [0,1)",
                    ))
                } else if *mean_matched && lambda0 - alpha * lambda1 <= 0.0 {
                    Err(Error::config(
                        "mean matching needs lambda0 > alpha * lambda1",
                    ))
                } else {
                    Ok(())
                }
            }
            Scenario::OrdinalDrift { p0, ramp } => {
                if p0.len() < 2
                    || p0.iter().any(|p| !(*p >= 0.0))
                    || (p0.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    Err(Error::config(
                        "p0 must be a probability vector with at least 2 categories",
                    ))
                } else if *ramp == 0 {
                    Err(Error::config("ramp must be at least 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Right-shifted ordinal law: no mass on the first class, class `j` takes
/// `p₀[j−1]`, the last class collects the top two.
pub fn ordinal_shift(p0: &[f64]) -> Vec<f64> {
    let m = p0.len();
    let mut p = vec![0.0; m];
    p[1..m].copy_from_slice(&p0[..m - 1]);
    p[m - 1] += p0[m - 1];
    p
}

/// Inverse-CDF draw of a category in `0..p.len()`.
fn category(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// Materialized stream: base samples and shift parameters are drawn once,
/// batches on demand.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    spec: StreamSpec,
    seed: u64,
    base0: Vec<f64>,
    base1: Vec<f64>,
    /// Post-change mixture weights of the reweighting scenario.
    post_weights: Option<Vec<f64>>,
}

impl StreamGenerator {
    pub fn new(spec: &StreamSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (d, n) = (spec.d, spec.n);
        let mut gen = Self {
            spec: spec.clone(),
            seed,
            base0: Vec::new(),
            base1: Vec::new(),
            post_weights: None,
        };
        if !spec.scenario.is_continuous() {
            return Ok(gen);
        }
        let mix = spec.mixture();
        let u = SampleUniforms::draw(n, d, &mut rng_for(seed, &[LANE_BASE]));
        gen.base0 = mix.sample_from_uniforms(&u)?;
        gen.base1 = match &spec.scenario {
            Scenario::Barycenter { delta_loc } => {
                shift_locations(&mix, *delta_loc).sample_from_uniforms(&u)?
            }
            Scenario::MmReweight {
                delta_mm,
                pair_antipodal,
            } => {
                let k = mix.weights.len();
                let mut rng = rng_for(seed, &[LANE_SHIFT]);
                let ln =
                    LogNormal::new(0.0, *delta_mm).map_err(|e| Error::config(e.to_string()))?;
                let mut eta: Vec<f64> = (0..k).map(|_| ln.sample(&mut rng)).collect();
                if *pair_antipodal && k.is_multiple_of(2) {
                    for i in 0..k / 2 {
                        let g = (eta[i] * eta[i + k / 2]).sqrt();
                        eta[i] = g;
                        eta[i + k / 2] = g;
                    }
                }
                let post = reweight(&mix, &eta)?;
                gen.post_weights = Some(post.weights.clone());
                post.sample_from_uniforms(&u)?
            }
            Scenario::CopulaShift { rho } => {
                iman_conover(&gen.base0, d, *rho, derive_seed(seed, &[LANE_SHIFT]))?
            }
            _ => unreachable!("continuous scenarios only"),
        };
        Ok(gen)
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn kappa(&self) -> usize {
        self.spec.kappa()
    }

    /// Same randomness, different change point.
    pub fn with_kappa(&self, kappa: usize) -> Self {
        let mut g = self.clone();
        g.spec.kappa = Some(kappa);
        g
    }

    /// Pre-change base sample (continuous scenarios), flat `N × d`.
    pub fn base_sample(&self) -> &[f64] {
        &self.base0
    }

    /// Post-change base sample (continuous scenarios).
    pub fn post_base_sample(&self) -> &[f64] {
        &self.base1
    }

    pub fn post_weights(&self) -> Option<&[f64]> {
        self.post_weights.as_deref()
    }

    pub fn is_post_change(&self, t: usize) -> bool {
        t > self.kappa()
    }

    /// Ordinal drift weight γₜ.
    pub fn gamma(&self, t: usize) -> f64 {
        match &self.spec.scenario {
            Scenario::OrdinalDrift { ramp, .. } if t > self.kappa() => {
                ((t - self.kappa()) as f64 / *ramp as f64).min(1.0)
            }
            _ => 0.0,
        }
    }

    /// Deformation applied at time `t` (continuous scenarios).
    pub fn deformation(&self, t: usize) -> DeformationParams {
        let s = &self.spec;
        DeformationParams::random(
            s.d,
            s.j,
            s.epsilon,
            s.beta,
            &mut rng_for(self.seed, &[LANE_DEFORM, t as u64]),
        )
    }

    /// Raw points of batch `t` (flat `N × d`).
    pub fn batch_points(&self, t: usize) -> Result<Vec<f64>> {
        if t == 0 {
            return Err(Error::config("batches are indexed from 1"));
        }
        let s = &self.spec;
        let post = self.is_post_change(t);
        let mut rng = rng_for(self.seed, &[LANE_NOISE, t as u64]);
        let pts = match &s.scenario {
            sc if sc.is_continuous() => {
                let mut pts = if post {
                    self.base1.clone()
                } else {
                    self.base0.clone()
                };
                self.deformation(t).apply_all(&mut pts);
                pts
            }
            Scenario::GaussianShift { sigma, delta } => {
                let normal = Normal::new(0.0, *sigma).map_err(|e| Error::config(e.to_string()))?;
                let mut pts: Vec<f64> = (0..s.n * s.d).map(|_| normal.sample(&mut rng)).collect();
                if post {
                    pts.iter_mut().step_by(s.d).for_each(|x| *x += delta);
                }
                pts
            }
            Scenario::PoissonSpike {
                lambda0,
                alpha,
                k_star,
            } => {
                let pois = Poisson::new(*lambda0).map_err(|e| Error::config(e.to_string()))?;
                (0..s.n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let x: f64 = pois.sample(&mut rng);
                        if post && u < *alpha {
                            *k_star as f64
                        } else {
                            x
                        }
                    })
                    .collect()
            }
            Scenario::PoissonHeavyTail {
                lambda0,
                alpha,
                lambda1,
                mean_matched,
            } => {
                let bg = if post && *mean_matched {
                    (lambda0 - alpha * lambda1) / (1.0 - alpha)
                } else {
                    *lambda0
                };
                let p_bg = Poisson::new(bg).map_err(|e| Error::config(e.to_string()))?;
                let p_hi = Poisson::new(*lambda1).map_err(|e| Error::config(e.to_string()))?;
                (0..s.n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if post && u < *alpha {
                            p_hi.sample(&mut rng)
                        } else {
                            p_bg.sample(&mut rng)
                        }
                    })
                    .collect()
            }
            Scenario::OrdinalDrift { p0, .. } => {
                let g = self.gamma(t);
                let shift = ordinal_shift(p0);
                let p: Vec<f64> = p0
                    .iter()
                    .zip(&shift)
                    .map(|(a, b)| (1.0 - g) * a + g * b)
                    .collect();
                (0..s.n)
                    .map(|_| (category(&p, rng.random()) + 1) as f64)
                    .collect()
            }
            _ => unreachable!(),
        };
        Ok(pts)
    }

    /// Batch `t` as a uniform empirical measure.
    pub fn batch(&self, t: usize) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::from_samples(self.spec.d, self.batch_points(t)?)
    }

    /// Batches `1..=len`.
    pub fn batches(&self) -> impl Iterator<Item = Result<EmpiricalMeasure>> + '_ {
        (1..=self.spec.len).map(move |t| self.batch(t))
    }

    /// Batches `from..` without end.
    pub fn batches_from(&self, from: usize) -> impl Iterator<Item = Result<EmpiricalMeasure>> + '_ {
        (from..).map(move |t| self.batch(t))
    }
}

/// The fixed base sample of a continuous stream.
pub fn sample_reference(spec: &StreamSpec, seed: u64) -> Result<Vec<f64>> {
    if !spec.scenario.is_continuous() {
        return Err(Error::config(
            "only continuous scenarios have a base sample",
        ));
    }
    Ok(StreamGenerator::new(spec, seed)?.base0)
}

/// All `len` batches of a stream.
pub fn gen_stream(spec: &StreamSpec, seed: u64) -> Result<Vec<EmpiricalMeasure>> {
    let g = StreamGenerator::new(spec, seed)?;
    g.batches().collect()
}
