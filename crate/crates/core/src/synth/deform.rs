//! Random gradient-of-convex deformations of the unit cube.
//!
//! `T(x) = x + ε Σⱼ wⱼ h_β(⟨aⱼ, x⟩ − cⱼ) aⱼ` with `h_β = ζ_β σ_β`, the
//! gradient of `½‖x‖² + (ε/2) Σⱼ wⱼ ζ_β(⟨aⱼ, x⟩ − cⱼ)²`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::rng_for;

/// Softplus `β⁻¹ log(1 + e^{βz})`, overflow-safe.
pub fn softplus(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    if bz > 0.0 {
        z + (-bz).exp().ln_1p() / beta
    } else {
        bz.exp().ln_1p() / beta
    }
}

/// Logistic `1 / (1 + e^{−βz})`, overflow-safe.
pub fn sigmoid(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    if bz >= 0.0 {
        1.0 / (1.0 + (-bz).exp())
    } else {
        let e = bz.exp();
        e / (1.0 + e)
    }
}

/// `h_β(z) = ζ_β(z) σ_β(z)`.
pub fn h_beta(beta: f64, z: f64) -> f64 {
    softplus(beta, z) * sigmoid(beta, z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    /// `J × d`, unit rows.
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
    pub epsilon: f64,
    pub beta: f64,
}

impl DeformationParams {
    /// Directions uniform on the sphere, Dirichlet(1) weights, offsets
    /// uniform over the projection of `[0,1]ᵈ` onto each direction.
    pub fn random<R: Rng>(d: usize, j: usize, epsilon: f64, beta: f64, rng: &mut R) -> Self {
        let mut directions = Vec::with_capacity(j);
        let mut offsets = Vec::with_capacity(j);
        for _ in 0..j {
            let a = loop {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
                }
            };
            let lo: f64 = a.iter().map(|x| x.min(0.0)).sum();
            let hi: f64 = a.iter().map(|x| x.max(0.0)).sum();
            offsets.push(rng.random_range(lo..=hi));
            directions.push(a);
        }
        let raw: Vec<f64> = (0..j).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
        let total: f64 = raw.iter().sum();
        Self {
            directions,
            weights: raw.iter().map(|w| w / total).collect(),
            offsets,
            epsilon,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.directions.first().map_or(0, Vec::len);
        if d == 0
            || self.weights.len() != self.directions.len()
            || self.offsets.len() != self.directions.len()
        {
            return Err(Error::config(
                "deformation needs J >= 1 directions with one weight and offset each",
            ));
        }
        for a in &self.directions {
            let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            if a.len() != d || (n - 1.0).abs() > 1e-10 {
                return Err(Error::config(
                    "deformation directions must be unit vectors of equal length",
                ));
            }
        }
        if self.weights.iter().any(|w| !(*w > 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::config(
                "deformation weights must be positive and sum to 1",
            ));
        }
        if !(self.epsilon >= 0.0) || !(self.beta > 0.0) {
            return Err(Error::config("deformation needs epsilon >= 0 and beta > 0"));
        }
        Ok(())
    }

    /// Apply the map to every row of a flat point buffer in place.
    pub fn apply_all(&self, points: &mut [f64]) {
        let d = self.dim();
        for x in points.chunks_mut(d) {
            let y = self.apply(x);
            x.copy_from_slice(&y);
        }
    }
}

/// A map `ℝᵈ → ℝᵈ` that can be checked for monotonicity.
pub trait PointMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl PointMap for DeformationParams {
    fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for ((a, w), c) in self.directions.iter().zip(&self.weights).zip(&self.offsets) {
            let z: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - c;
            let s = self.epsilon * w * h_beta(self.beta, z);
            y.iter_mut().zip(a).for_each(|(yi, ai)| *yi += s * ai);
        }
        y
    }
}

/// Rotation by `angle` in the first two coordinates; not monotone once the
/// angle exceeds a right angle. Used as a negative control.
#[derive(Debug, Clone, Copy)]
pub struct RotationField {
    pub dim: usize,
    pub angle: f64,
}

impl PointMap for RotationField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let (s, c) = self.angle.sin_cos();
        y[0] = c * x[0] - s * x[1];
        y[1] = s * x[0] + c * x[1];
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// Smallest `⟨T(x) − T(y), x − y⟩` seen.
    pub worst_margin: f64,
    pub pairs: usize,
}

/// Check `⟨T(x) − T(y), x − y⟩ ≥ −1e-10` on `n_pairs` uniform pairs in
/// `[0,1]ᵈ`.
pub fn monotonicity_check<M: PointMap + ?Sized>(
    map: &M,
    n_pairs: usize,
    seed: u64,
) -> MonotonicityReport {
    let d = map.dim();
    let mut rng = rng_for(seed, &[]);
    let mut worst = f64::INFINITY;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..n_pairs {
        x.iter_mut().for_each(|v| *v = rng.random());
        y.iter_mut().for_each(|v| *v = rng.random());
        let (tx, ty) = (map.apply(&x), map.apply(&y));
        let m: f64 = (0..d).map(|k| (tx[k] - ty[k]) * (x[k] - y[k])).sum();
        worst = worst.min(m);
    }
    MonotonicityReport {
        pass: worst >= -1e-10,
        worst_margin: worst,
        pairs: n_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stable_scalar_functions() {
        assert!((softplus(5.0, 0.0) - 2f64.ln() / 5.0).abs() < 1e-15);
        assert!((softplus(5.0, 1000.0) - 1000.0).abs() < 1e-12);
        assert_eq!(softplus(5.0, -1000.0), 0.0);
        assert_eq!(sigmoid(5.0, 0.0), 0.5);
        assert!(sigmoid(5.0, -1000.0) >= 0.0);
        assert!((h_beta(5.0, 0.0) - 2f64.ln() / 10.0).abs() < 1e-15);
        assert!(h_beta(5.0, 500.0).is_finite());
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let mut p = DeformationParams::random(3, 3, 0.3, 5.0, &mut ChaCha8Rng::seed_from_u64(2));
        p.epsilon = 0.0;
        let x = [0.1, 0.7, 0.4];
        assert_eq!(p.apply(&x), x.to_vec());
    }

    #[test]
    fn large_argument_is_affine_shear() {
        let p = DeformationParams {
            directions: vec![vec![1.0, 0.0]],
            weights: vec![1.0],
            offsets: vec![-1000.0],
            epsilon: 0.3,
            beta: 5.0,
        };
        let x = [0.4, 0.9];
        let y = p.apply(&x);
        assert!((y[0] - (0.4 + 0.3 * (0.4 + 1000.0))).abs() < 1e-6);
        assert_eq!(y[1], 0.9);
    }

    #[test]
    fn random_params_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..6 {
            DeformationParams::random(d, 3, 0.3, 5.0, &mut rng)
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn rotation_fails_and_identity_passes() {
        let rot = RotationField {
            dim: 2,
            angle: 2.0 * std::f64::consts::PI / 3.0,
        };
        assert!(!monotonicity_check(&rot, 100, 1).pass);
        let mut id = DeformationParams::random(2, 1, 0.3, 5.0, &mut ChaCha8Rng::seed_from_u64(1));
        id.epsilon = 0.0;
        let r = monotonicity_check(&id, 100, 1);
        assert!(r.pass && r.worst_margin > 0.0);
    }
}
