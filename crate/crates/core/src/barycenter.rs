//! Free-support Fréchet barycenter by fixed-point iteration.
//!
//! Each iteration solves a plan from the current candidate to every input
//! measure and moves each candidate atom to the mean of its barycentric
//! projections. Candidate weights stay fixed at `1/m`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{barycentric_projection, EmpiricalMeasure, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarycenterConfig {
    /// Number of support atoms of the fitted barycenter.
    pub m_atoms: usize,
    /// Stop once the relative decrease of the functional falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub init_seed: u64,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            m_atoms: 128,
            tol: 1e-5,
            max_iter: 50,
            init_seed: 0,
        }
    }
}

impl BarycenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_atoms < 2 {
            return Err(Error::config("barycenter needs m_atoms >= 2"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("barycenter tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("barycenter max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Result of [`fit_barycenter`].
#[derive(Debug, Clone)]
pub struct BarycenterFit {
    /// Best candidate found.
    pub measure: EmpiricalMeasure,
    /// Functional value of `measure`.
    pub functional: f64,
    /// Running best functional value, one entry per evaluated iterate
    /// (the initial candidate included).
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn check_inputs(measures: &[EmpiricalMeasure]) -> Result<usize> {
    let first = measures
        .first()
        .ok_or_else(|| Error::EmptyInput("no measures for the barycenter".into()))?;
    let d = first.dim();
    if let Some(m) = measures.iter().find(|m| m.dim() != d) {
        return Err(Error::dim(format!(
            "measures of dimension {d} and {}",
            m.dim()
        )));
    }
    Ok(d)
}

/// `(1/M) Σₜ W₂²(candidate, μₜ)` under the given solver.
pub fn frechet_functional(
    candidate: &EmpiricalMeasure,
    measures: &[EmpiricalMeasure],
    solver: &SolverConfig,
) -> Result<f64> {
    check_inputs(measures)?;
    let costs: Vec<f64> = measures
        .par_iter()
        .map(|mu| solver.solve(candidate, mu).map(|t| t.cost_value()))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / measures.len() as f64)
}

/// Functional value at `candidate` together with the averaged projection.
fn evaluate(
    candidate: &EmpiricalMeasure,
    measures: &[EmpiricalMeasure],
    solver: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = measures
        .par_iter()
        .map(|mu| {
            let t = solver.solve(candidate, mu)?;
            let proj = barycentric_projection(&t.coupling, mu)?;
            Ok((t.cost_value(), proj))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / measures.len() as f64;
    let mut avg = vec![0.0; candidate.points().len()];
    let mut f = 0.0;
    for (c, p) in &parts {
        f += c;
        avg.iter_mut().zip(p).for_each(|(a, x)| *a += x);
    }
    avg.iter_mut().for_each(|a| *a *= scale);
    Ok((f * scale, avg))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Seeded subsample of the pooled support, independent of measure order.
/// Repeated points are kept only when fewer than `m` distinct ones exist.
fn initial_atoms(measures: &[EmpiricalMeasure], d: usize, m: usize, seed: u64) -> Vec<f64> {
    let mut pool: Vec<&[f64]> = measures
        .iter()
        .flat_map(|mu| mu.points().chunks(d))
        .collect();
    pool.sort_by(|a, b| lex_cmp(a, b));
    // coincident atoms would be merged and never separate again, so sample
    // distinct points when there are enough of them
    let mut distinct = pool.clone();
    distinct.dedup_by(|a, b| lex_cmp(a, b).is_eq());
    if distinct.len() >= m {
        pool = distinct;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<&[f64]> = if pool.len() <= m {
        pool
    } else {
        sample(&mut rng, pool.len(), m)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    picked.sort_by(|a, b| lex_cmp(a, b));
    picked.concat()
}

/// Fit a free-support barycenter with `m_atoms` uniform atoms.
///
/// If the pooled support has fewer than `m_atoms` points, all of them are
/// used. Atoms that become coincident are merged, so the returned weights
/// are multiples of `1/m`.
pub fn fit_barycenter(
    measures: &[EmpiricalMeasure],
    config: &BarycenterConfig,
    solver: &SolverConfig,
) -> Result<BarycenterFit> {
    config.validate()?;
    let d = check_inputs(measures)?;
    let pts = initial_atoms(measures, d, config.m_atoms, config.init_seed);
    let mut candidate = EmpiricalMeasure::from_samples(d, pts)?;
    let (mut f, mut proj) = evaluate(&candidate, measures, solver)?;
    let mut best = (candidate.clone(), f);
    let mut history = vec![f];
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        iterations += 1;
        let next = EmpiricalMeasure::new(d, proj, candidate.weights().to_vec())?;
        let (f_next, proj_next) = evaluate(&next, measures, solver)?;
        let rel = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
        if f_next < best.1 {
            best = (next.clone(), f_next);
        }
        history.push(best.1);
        candidate = next;
        proj = proj_next;
        f = f_next;
        if rel < config.tol {
            break;
        }
    }
    log::debug!(
        "barycenter: {iterations} iterations, functional {:.6e}",
        best.1
    );
    Ok(BarycenterFit {
        measure: best.0,
        functional: best.1,
        history,
        iterations,
    })
}
