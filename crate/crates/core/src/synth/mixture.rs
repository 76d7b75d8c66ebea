//! Mixtures of product-Beta laws on the unit cube.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};

/// One mixture component: independent `Beta(aₖ, bₖ)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaComponent {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BetaComponent {
    /// Component with coordinate means `means` and shared concentration `a + b`.
    pub fn from_means(means: &[f64], concentration: f64) -> Self {
        Self {
            a: means.iter().map(|m| m * concentration).collect(),
            b: means.iter().map(|m| (1.0 - m) * concentration).collect(),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a / (a + b))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductBetaMixture {
    pub weights: Vec<f64>,
    pub components: Vec<BetaComponent>,
}

/// Coordinate mean 0.25 or 0.75 of the default components.
const LOW: f64 = 0.25;
const CONCENTRATION: f64 = 20.0;

impl ProductBetaMixture {
    /// Four equally weighted components forming two antipodal pairs:
    /// component 0 sits near `(¼,…,¼)`, component 1 alternates `¼, ¾`, and
    /// components 2 and 3 are their reflections through the cube center.
    pub fn default_for(d: usize) -> Self {
        let c0 = vec![LOW; d];
        let c1: Vec<f64> = (0..d)
            .map(|j| if j % 2 == 0 { LOW } else { 1.0 - LOW })
            .collect();
        let reflect = |v: &[f64]| v.iter().map(|x| 1.0 - x).collect::<Vec<_>>();
        let c2 = reflect(&c0);
        let c3 = reflect(&c1);
        Self {
            weights: vec![0.25; 4],
            components: [c0, c1, c2, c3]
                .iter()
                .map(|m| BetaComponent::from_means(m, CONCENTRATION))
                .collect(),
        }
    }

    /// A single `Beta(1,1)^d` component, i.e. the uniform law.
    pub fn uniform(d: usize) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![BetaComponent {
                a: vec![1.0; d],
                b: vec![1.0; d],
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.a.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.components.is_empty() || self.weights.len() != self.components.len() || d == 0 {
            return Err(Error::config(
                "mixture needs one weight per component and d >= 1",
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(
                "mixture weights must be a probability vector",
            ));
        }
        for c in &self.components {
            if c.a.len() != d || c.b.len() != d {
                return Err(Error::config(
                    "mixture components have differing dimensions",
                ));
            }
            if c.a
                .iter()
                .chain(&c.b)
                .any(|p| !(*p > 0.0) || !p.is_finite())
            {
                return Err(Error::config("Beta parameters must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Mixture mean per coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            m.iter_mut()
                .zip(c.means())
                .for_each(|(acc, x)| *acc += w * x);
        }
        m
    }

    /// Component selected by the uniform `u`.
    pub fn component_of(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        // u within rounding of 1: last component with positive weight
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    /// Map shared uniforms to a sample by inverse CDFs. Two mixtures fed the
    /// same uniforms give coupled samples; identical mixtures give identical
    /// samples.
    pub fn sample_from_uniforms(&self, u: &SampleUniforms) -> Result<Vec<f64>> {
        self.validate()?;
        let d = self.dim();
        if u.coords.len() != u.select.len() * d {
            return Err(Error::dim(
                "uniform buffer does not match the mixture dimension",
            ));
        }
        let betas: Vec<Vec<Beta>> = self
            .components
            .iter()
            .map(|c| {
                c.a.iter()
                    .zip(&c.b)
                    .map(|(&a, &b)| {
                        Beta::new(a, b).map_err(|e| Error::config(format!("Beta({a}, {b}): {e}")))
                    })
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(u.coords.len());
        for (i, &s) in u.select.iter().enumerate() {
            let k = self.component_of(s);
            for j in 0..d {
                out.push(betas[k][j].inverse_cdf(u.coords[i * d + j]).clamp(0.0, 1.0));
            }
        }
        Ok(out)
    }

    /// Draw `n` points together with their component labels.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<usize>)> {
        let u = SampleUniforms::draw(n, self.dim(), rng);
        let labels = u.select.iter().map(|&s| self.component_of(s)).collect();
        Ok((self.sample_from_uniforms(&u)?, labels))
    }
}

/// Uniform variates behind one mixture sample: one selector per point and
/// one per coordinate.
#[derive(Debug, Clone)]
pub struct SampleUniforms {
    pub select: Vec<f64>,
    pub coords: Vec<f64>,
}

impl SampleUniforms {
    pub fn draw<R: Rng>(n: usize, d: usize, rng: &mut R) -> Self {
        // open interval keeps inverse CDFs finite
        let mut open = || loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                return x;
            }
        };
        let select = (0..n).map(|_| open()).collect();
        let coords = (0..n * d).map(|_| open()).collect();
        Self { select, coords }
    }
}

/// Add `delta` to the logit of every coordinate mean, keeping each
/// coordinate's concentration `a + b`.
pub fn shift_locations(mix: &ProductBetaMixture, delta: f64) -> ProductBetaMixture {
    let components = mix
        .components
        .iter()
        .map(|c| {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (&aj, &bj) in c.a.iter().zip(&c.b) {
                let conc = aj + bj;
                let m = aj / conc;
                let shifted = 1.0 / (1.0 + (-((m / (1.0 - m)).ln() + delta)).exp());
                a.push(shifted * conc);
                b.push((1.0 - shifted) * conc);
            }
            BetaComponent { a, b }
        })
        .collect();
    ProductBetaMixture {
        weights: mix.weights.clone(),
        components,
    }
}

/// `π⁽¹⁾ₖ ∝ πₖ ηₖ`.
pub fn reweight(mix: &ProductBetaMixture, eta: &[f64]) -> Result<ProductBetaMixture> {
    if eta.len() != mix.weights.len() || eta.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::config(
            "need one positive finite multiplier per component",
        ));
    }
    let raw: Vec<f64> = mix.weights.iter().zip(eta).map(|(p, e)| p * e).collect();
    let total: f64 = raw.iter().sum();
    Ok(ProductBetaMixture {
        weights: raw.iter().map(|w| w / total).collect(),
        components: mix.components.clone(),
    })
}
