//! Quick oracle and invariant checks run by the `verify` command.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detector::{arl_lower_bound, threshold_index};
use crate::error::Result;
use crate::mfpca::{fit_basis_via, KRule, Route};
use crate::ot::{
    barycentric_projection, brute_force_plan, cost_matrix, exact_plan_1d, sinkhorn_plan,
    tangent_field, transport_cost, EmpiricalMeasure, SolverConfig, TangentField,
};
use crate::seeds::rng_for;
use crate::synth::{monotonicity_check, DeformationParams, RotationField};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmpiricalMeasure {
    let pts: Vec<f64> = (0..n * d)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    EmpiricalMeasure::from_samples(d, pts).expect("finite points")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn sinkhorn_vs_oracles(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, &[1]);
    let mut worst = 0.0f64;
    let mut worst_1d = 0.0f64;
    for _ in 0..40 {
        let n = rng.random_range(2..=6);
        let d = rng.random_range(1..=3);
        let (a, b) = (cloud(&mut rng, n, d), cloud(&mut rng, n, d));
        let c = cost_matrix(&a, &b)?;
        let exact = transport_cost(&brute_force_plan(&a, &b)?, &c)?;
        let eps = 1e-3 * crate::ot::median_nonzero(&c).unwrap_or(1.0);
        let sk = transport_cost(&sinkhorn_plan(&a, &b, eps, 1e-7, 100_000)?, &c)?;
        if exact > 1e-6 {
            worst = worst.max(rel(sk, exact));
        }
        if d == 1 && exact > 1e-6 {
            let e1 = transport_cost(&exact_plan_1d(&a, &b)?, &c)?;
            worst_1d = worst_1d.max(rel(e1, exact));
        }
    }
    Ok(CheckResult {
        name: "sinkhorn_matches_enumeration",
        passed: worst <= 0.05 && worst_1d <= 1e-9,
        detail: format!("worst relative gap {worst:.2e}; 1-D exact gap {worst_1d:.2e}"),
    })
}

fn variance_decomposition(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, &[2]);
    let mut worst = 0.0f64;
    let mut contraction_ok = true;
    for _ in 0..30 {
        let d = rng.random_range(1..=3);
        let (na, nb) = (rng.random_range(2..8), rng.random_range(2..8));
        let (a, b) = (cloud(&mut rng, na, d), cloud(&mut rng, nb, d));
        let c = cost_matrix(&a, &b)?;
        let eps = rng.random_range(0.01..1.0) * crate::ot::median_nonzero(&c).unwrap_or(1.0);
        let plan = sinkhorn_plan(&a, &b, eps, 1e-10, 100_000)?;
        let proj = barycentric_projection(&plan, &b)?;
        let v = tangent_field(&proj, &a)?;
        let total = transport_cost(&plan, &c)?;
        let mut spread = 0.0;
        for i in 0..a.len() {
            let t = &proj[i * d..(i + 1) * d];
            for j in 0..b.len() {
                let y = b.point(j);
                spread +=
                    plan.plan().get(i, j) * (0..d).map(|k| (y[k] - t[k]).powi(2)).sum::<f64>();
            }
        }
        worst = worst.max((v.norm_sq() - (total - spread)).abs());
        contraction_ok &= v.norm_sq() <= total + 1e-12;
    }
    Ok(CheckResult {
        name: "variance_decomposition",
        passed: worst <= 1e-10 && contraction_ok,
        detail: format!("worst identity residual {worst:.2e}"),
    })
}

fn translation_identity(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, &[3]);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let d = rng.random_range(1..=3);
        let x = cloud(&mut rng, 12, d);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let y = x.translated(&shift)?;
        let tr = SolverConfig::exact().solve(&x, &y)?;
        let v = tangent_field(&barycentric_projection(&tr.coupling, &y)?, &x)?;
        let target = TangentField::constant(&shift, v.ref_weights().clone());
        let gap = v
            .vectors()
            .iter()
            .zip(target.vectors())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        let norm = shift.iter().map(|s| s * s).sum::<f64>().sqrt();
        worst = worst.max(gap).max((tr.cost_value().sqrt() - norm).abs());
    }
    Ok(CheckResult {
        name: "translation_identity",
        passed: worst <= 1e-6,
        detail: format!("worst deviation {worst:.2e}"),
    })
}

fn route_duality(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, &[4]);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (m, d, n0) = (rng.random_range(2..=5), 2, 20);
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w: std::sync::Arc<[f64]> = raw.iter().map(|x| x / s).collect();
        let fields: Vec<TangentField> = (0..n0)
            .map(|_| {
                TangentField::new(
                    d,
                    (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    w.clone(),
                )
            })
            .collect::<Result<_>>()?;
        let g = fit_basis_via(&fields, KRule::Fixed(1), Route::Gram)?;
        let p = fit_basis_via(&fields, KRule::Fixed(1), Route::Primal)?;
        let r = g.rank().min(p.rank());
        for k in 0..r {
            worst = worst.max((g.eigenvalues()[k] - p.eigenvalues()[k]).abs());
        }
    }
    Ok(CheckResult {
        name: "gram_primal_duality",
        passed: worst <= 1e-8,
        detail: format!("worst eigenvalue gap {worst:.2e}"),
    })
}

fn deformation_monotone(seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[5]);
    let mut worst = f64::INFINITY;
    for i in 0..5 {
        let d = rng.random_range(1..=4);
        let p = DeformationParams::random(d, 3, 0.3, 5.0, &mut rng);
        worst = worst.min(monotonicity_check(&p, 10_000, seed.wrapping_add(i)).worst_margin);
    }
    let rot = monotonicity_check(&RotationField { dim: 2, angle: 2.5 }, 10_000, seed);
    CheckResult {
        name: "deformation_monotone",
        passed: worst >= -1e-10 && !rot.pass,
        detail: format!(
            "worst margin {worst:.2e}; rotation control margin {:.2e}",
            rot.worst_margin
        ),
    }
}

fn calibration_arithmetic() -> Result<CheckResult> {
    let k = threshold_index(100, 0.05)?;
    let b1 = arl_lower_bound(100, 0.01, 0.01);
    let b2 = arl_lower_bound(100, 1e-12, 1e-12);
    Ok(CheckResult {
        name: "calibration_arithmetic",
        passed: k == 95 && (b1 - 126.12).abs() < 0.01 && (b2 - 151.5).abs() < 1e-6,
        detail: format!("k = {k}, bounds {b1:.2} and {b2:.2}"),
    })
}

/// Run every check; solver errors propagate.
pub fn run_verify(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        checks: vec![
            sinkhorn_vs_oracles(seed)?,
            variance_decomposition(seed)?,
            translation_identity(seed)?,
            route_duality(seed)?,
            deformation_monotone(seed),
            calibration_arithmetic()?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_passes() {
        let r = run_verify(7).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
