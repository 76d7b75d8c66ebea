//! Discrete optimal transport under quadratic cost.
//!
//! Three solvers produce [`Coupling`]s between two [`EmpiricalMeasure`]s:
//!
//! * [`sinkhorn_plan`]: entropic regularization, run on dual potentials so
//!   that it stays finite for very small regularization;
//! * [`exact_plan_1d`]: the monotone (north-west corner on sorted supports)
//!   coupling, optimal on the line;
//! * [`assignment_plan`] / [`brute_force_plan`]: optimal permutations for
//!   equal-size uniform clouds (the latter only as a test oracle).
//!
//! A coupling is turned into a map through its conditional mean
//! ([`barycentric_projection`]) and into a displacement field at the source
//! atoms ([`tangent_field`]).

mod exact;
mod measure;
mod sinkhorn;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use exact::{assignment_plan, brute_force_plan, exact_plan_1d};
pub use measure::{Coupling, EmpiricalMeasure, Matrix, TangentField, DEFAULT_MARGINAL_TOL};
pub use sinkhorn::{median_nonzero, round_to_feasible, sinkhorn_plan, sinkhorn_with_cost};

use crate::error::{Error, Result};

/// Squared Euclidean distances between every source and target atom.
pub fn cost_matrix(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Matrix> {
    let d = source.dim();
    if d != target.dim() {
        return Err(Error::dim(format!(
            "source has dimension {d}, target {}",
            target.dim()
        )));
    }
    let (n, m) = (source.len(), target.len());
    let mut c = Matrix::zeros(n, m);
    for i in 0..n {
        let x = source.point(i);
        let row = c.row_mut(i);
        for (j, cij) in row.iter_mut().enumerate() {
            let y = target.point(j);
            *cij = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    Ok(c)
}

/// Σᵢⱼ planᵢⱼ · costᵢⱼ.
pub fn transport_cost(coupling: &Coupling, cost: &Matrix) -> Result<f64> {
    if coupling.plan().shape() != cost.shape() {
        return Err(Error::dim(format!(
            "plan is {:?} but cost is {:?}",
            coupling.plan().shape(),
            cost.shape()
        )));
    }
    Ok(coupling
        .plan()
        .as_slice()
        .iter()
        .zip(cost.as_slice())
        .map(|(p, c)| p * c)
        .sum())
}

/// Square root of [`transport_cost`].
pub fn w2(coupling: &Coupling, cost: &Matrix) -> Result<f64> {
    Ok(transport_cost(coupling, cost)?.max(0.0).sqrt())
}

/// Conditional mean of the plan: `T(xᵢ) = Σⱼ πᵢⱼ yⱼ / Σⱼ πᵢⱼ`.
///
/// Returns one point per source atom, flattened row-major.
pub fn barycentric_projection(coupling: &Coupling, target: &EmpiricalMeasure) -> Result<Vec<f64>> {
    let plan = coupling.plan();
    if plan.cols() != target.len() {
        return Err(Error::dim(format!(
            "plan has {} columns, target {} atoms",
            plan.cols(),
            target.len()
        )));
    }
    let d = target.dim();
    let mut out = vec![0.0; plan.rows() * d];
    for i in 0..plan.rows() {
        let row = plan.row(i);
        let mass: f64 = row.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateRow(i));
        }
        let dst = &mut out[i * d..(i + 1) * d];
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, y) in dst.iter_mut().zip(target.point(j)) {
                *o += p * y;
            }
        }
        dst.iter_mut().for_each(|o| *o /= mass);
    }
    Ok(out)
}

/// Displacement `T(xᵢ) − xᵢ` at every source atom.
pub fn tangent_field(projection: &[f64], source: &EmpiricalMeasure) -> Result<TangentField> {
    tangent_field_on(projection, source, Arc::from(source.weights()))
}

/// As [`tangent_field`], reusing an existing shared weight vector.
pub fn tangent_field_on(
    projection: &[f64],
    source: &EmpiricalMeasure,
    ref_weights: Arc<[f64]>,
) -> Result<TangentField> {
    if projection.len() != source.points().len() {
        return Err(Error::dim(format!(
            "projection has {} coordinates, source {}",
            projection.len(),
            source.points().len()
        )));
    }
    if ref_weights.len() != source.len() {
        return Err(Error::dim("reference weights do not match source atoms"));
    }
    let v = projection
        .iter()
        .zip(source.points())
        .map(|(t, x)| t - x)
        .collect();
    TangentField::new(source.dim(), v, ref_weights)
}

/// Which transport solver to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Entropic (log-domain) Sinkhorn.
    #[default]
    Sinkhorn,
    /// Monotone coupling in 1-D, optimal assignment for equal-size uniform
    /// clouds in higher dimension.
    Exact,
}

/// Solver settings shared by the barycenter fit and the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Regularization as a fraction of the median nonzero cost entry.
    pub eps_scale: f64,
    pub marginal_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Sinkhorn,
            eps_scale: 5e-3,
            marginal_tol: DEFAULT_MARGINAL_TOL,
            max_iter: 10_000,
        }
    }
}

/// A solved transport problem: the plan together with its cost matrix.
#[derive(Debug, Clone)]
pub struct Transport {
    pub coupling: Coupling,
    pub cost: Matrix,
}

impl Transport {
    pub fn cost_value(&self) -> f64 {
        transport_cost(&self.coupling, &self.cost).expect("shapes agree by construction")
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self {
            method: SolverMethod::Exact,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_scale > 0.0) || !(self.marginal_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config(
                "solver needs eps_scale > 0, marginal_tol > 0 and max_iter >= 1",
            ));
        }
        Ok(())
    }

    /// Solve the transport problem from `source` to `target`.
    pub fn solve(&self, source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Transport> {
        let cost = cost_matrix(source, target)?;
        let coupling = match self.method {
            SolverMethod::Sinkhorn => {
                let eps = self.eps_scale * median_nonzero(&cost).unwrap_or(1.0);
                sinkhorn_with_cost(
                    &cost,
                    source.weights(),
                    target.weights(),
                    eps,
                    self.marginal_tol,
                    self.max_iter,
                )?
            }
            SolverMethod::Exact if source.dim() == 1 => exact_plan_1d(source, target)?,
            SolverMethod::Exact => assignment_plan(source, target)?,
        };
        Ok(Transport { coupling, cost })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cost_matrix_hand_values() {
        let c = cost_matrix(&m(&[&[0.0, 0.0]]), &m(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(c.as_slice(), &[0.0]);
        let c = cost_matrix(&m(&[&[0.0]]), &m(&[&[3.0]])).unwrap();
        assert_eq!(c.as_slice(), &[9.0]);
        let c = cost_matrix(
            &m(&[&[0.0, 0.0], &[1.0, 0.0]]),
            &m(&[&[0.0, 0.0], &[0.0, 2.0]]),
        )
        .unwrap();
        assert_eq!(c.as_slice(), &[0.0, 4.0, 1.0, 5.0]);
    }

    #[test]
    fn cost_matrix_dimension_mismatch() {
        let err = cost_matrix(&m(&[&[0.0]]), &m(&[&[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn self_cost_matrix_is_symmetric() {
        let a = m(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        let c = cost_matrix(&a, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }

    #[test]
    fn transport_cost_shape_mismatch() {
        let a = m(&[&[0.0], &[1.0]]);
        let cpl = exact_plan_1d(&a, &a).unwrap();
        let err = transport_cost(&cpl, &Matrix::zeros(3, 2)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn one_d_translation_cost() {
        let a = m(&[&[0.0], &[1.0]]);
        let b = m(&[&[2.0], &[3.0]]);
        let cpl = exact_plan_1d(&a, &b).unwrap();
        let c = cost_matrix(&a, &b).unwrap();
        assert!((transport_cost(&cpl, &c).unwrap() - 4.0).abs() < 1e-12);
        assert!((w2(&cpl, &c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_of_permutation_plan_hits_matched_points() {
        let a = m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let b = m(&[&[5.0, 5.0], &[1.2, 0.1], &[0.1, 1.1]]);
        let cpl = assignment_plan(&a, &b).unwrap();
        let proj = barycentric_projection(&cpl, &b).unwrap();
        for i in 0..3 {
            let row = cpl.plan().row(i);
            let j = row.iter().position(|&p| p > 0.0).unwrap();
            assert_eq!(&proj[i * 2..i * 2 + 2], b.point(j));
        }
    }

    #[test]
    fn self_coupling_projection_is_identity() {
        let a = m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let cpl = assignment_plan(&a, &a).unwrap();
        let proj = barycentric_projection(&cpl, &a).unwrap();
        assert_eq!(proj.as_slice(), a.points());
        let field = tangent_field(&proj, &a).unwrap();
        assert_eq!(field.norm_sq(), 0.0);
    }

    #[test]
    fn entropic_two_by_two_projection_is_row_average() {
        let plan = Matrix::from_vec(2, 2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let cpl = Coupling::new(plan, vec![0.5, 0.5], vec![0.5, 0.5], 0.1, 1e-12).unwrap();
        let target = m(&[&[2.0], &[4.0]]);
        let proj = barycentric_projection(&cpl, &target).unwrap();
        // (0.4*2 + 0.1*4)/0.5 = 2.4 ; (0.1*2 + 0.4*4)/0.5 = 3.6
        assert!((proj[0] - 2.4).abs() < 1e-12);
        assert!((proj[1] - 3.6).abs() < 1e-12);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let plan = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let cpl = Coupling::new_unchecked(plan, vec![0.5, 0.5], vec![1.0], 0.0).unwrap();
        let target = m(&[&[1.0]]);
        assert!(matches!(
            barycentric_projection(&cpl, &target),
            Err(Error::DegenerateRow(1))
        ));
    }

    #[test]
    fn tangent_field_length_mismatch() {
        let a = m(&[&[0.0], &[1.0]]);
        assert!(matches!(
            tangent_field(&[0.0], &a),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn translation_gives_constant_field() {
        let a = m(&[&[0.0, 0.0], &[1.0, 0.3], &[0.2, 0.9]]);
        let delta = [0.01, -0.02];
        let b = a.translated(&delta).unwrap();
        let t = SolverConfig::exact().solve(&a, &b).unwrap();
        let proj = barycentric_projection(&t.coupling, &b).unwrap();
        let field = tangent_field(&proj, &a).unwrap();
        for i in 0..3 {
            assert!((field.vector(i)[0] - delta[0]).abs() < 1e-12);
            assert!((field.vector(i)[1] - delta[1]).abs() < 1e-12);
        }
        assert!((field.norm_sq() - 5e-4).abs() < 1e-12);
    }
}
