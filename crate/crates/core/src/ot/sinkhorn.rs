//! Entropic transport on dual potentials.
//!
//! The iteration keeps potentials `(f, g)` and a kernel
//! `Kᵢⱼ = exp((fᵢ + gⱼ − Cᵢⱼ)/ε)`. Between kernel rebuilds the usual
//! matrix-scaling updates run on `(u, v)`; whenever a scaling leaves
//! `[1e-50, 1e50]` (or a kernel row underflows) the scalings are absorbed
//! into the potentials and the kernel is rebuilt from a log-sum-exp update.
//! Regularization is annealed geometrically from the cost range down to the
//! requested ε, warm-starting the potentials at each stage.
//!
//! At small ε the last stage can converge very slowly when several
//! assignments are nearly tied. Sweeps therefore stop once the marginal
//! violation is below `1e-3` of the smallest atom mass (or `tol`, if that is
//! larger), and the plan is rounded onto the exact transport polytope.

use super::measure::{Coupling, Matrix};
use super::{cost_matrix, EmpiricalMeasure};
use crate::error::{Error, Result};

const SCALING_BOUND: f64 = 1e50;
const ANNEAL_FACTOR: f64 = 0.5;
/// Iteration budget of each intermediate annealing stage.
const STAGE_ITERS: usize = 50;
/// Sweeps stop once the violation is below this fraction of the smallest
/// atom mass; the plan is then rounded onto the feasible set.
const ROUNDING_START: f64 = 1e-3;

/// Median of the strictly positive entries; `None` if there are none.
pub fn median_nonzero(cost: &Matrix) -> Option<f64> {
    let mut v: Vec<f64> = cost
        .as_slice()
        .iter()
        .copied()
        .filter(|&c| c > 0.0)
        .collect();
    if v.is_empty() {
        return None;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

/// Entropic plan between two measures with absolute regularization `eps`.
pub fn sinkhorn_plan(
    source: &EmpiricalMeasure,
    target: &EmpiricalMeasure,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Coupling> {
    let cost = cost_matrix(source, target)?;
    sinkhorn_with_cost(
        &cost,
        source.weights(),
        target.weights(),
        eps,
        tol,
        max_iter,
    )
}

struct State<'a> {
    cost: &'a Matrix,
    a: &'a [f64],
    b: &'a [f64],
    f: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    kernel: Vec<f64>,
    scratch: Vec<f64>,
}

impl State<'_> {
    fn n(&self) -> usize {
        self.a.len()
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// Fold the scalings into the potentials, then refresh both potentials
    /// with one exact log-domain half step each and rebuild the kernel.
    fn rebuild(&mut self, eps: f64) {
        let (n, m) = (self.n(), self.m());
        for (f, u) in self.f.iter_mut().zip(&self.u) {
            *f += eps * u.ln();
        }
        for (g, v) in self.g.iter_mut().zip(&self.v) {
            *g += eps * v.ln();
        }
        // f_i = eps ln a_i - eps LSE_j (g_j - C_ij)/eps
        for i in 0..n {
            let row = self.cost.row(i);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..m {
                let z = (self.g[j] - row[j]) / eps;
                self.scratch[j] = z;
                mx = mx.max(z);
            }
            let s: f64 = self.scratch[..m].iter().map(|z| (z - mx).exp()).sum();
            self.f[i] = eps * (self.a[i].ln() - mx - s.ln());
        }
        // g_j likewise, column-wise
        let mut mx = vec![f64::NEG_INFINITY; m];
        for i in 0..n {
            let row = self.cost.row(i);
            for j in 0..m {
                mx[j] = mx[j].max((self.f[i] - row[j]) / eps);
            }
        }
        let mut s = vec![0.0; m];
        for i in 0..n {
            let row = self.cost.row(i);
            for j in 0..m {
                s[j] += ((self.f[i] - row[j]) / eps - mx[j]).exp();
            }
        }
        for j in 0..m {
            self.g[j] = eps * (self.b[j].ln() - mx[j] - s[j].ln());
        }
        for i in 0..n {
            let row = self.cost.row(i);
            let k = &mut self.kernel[i * m..(i + 1) * m];
            for j in 0..m {
                k[j] = ((self.f[i] + self.g[j] - row[j]) / eps).exp();
            }
        }
        self.u.iter_mut().for_each(|u| *u = 1.0);
        self.v.iter_mut().for_each(|v| *v = 1.0);
    }

    /// One scaling sweep. Returns the row-marginal violation measured
    /// before the sweep (columns are exact at that point), or `None` if
    /// the kernel needs rebuilding.
    fn sweep(&mut self, update: bool) -> Option<f64> {
        let (n, m) = (self.n(), self.m());
        let mut viol = 0.0f64;
        for i in 0..n {
            let k = &self.kernel[i * m..(i + 1) * m];
            let s: f64 = k.iter().zip(&self.v).map(|(k, v)| k * v).sum();
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            viol = viol.max((self.u[i] * s - self.a[i]).abs());
            self.scratch[i] = s;
        }
        if !update {
            return Some(viol);
        }
        for i in 0..n {
            self.u[i] = self.a[i] / self.scratch[i];
        }
        let kt_u = &mut self.scratch[..m];
        kt_u.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let ui = self.u[i];
            let k = &self.kernel[i * m..(i + 1) * m];
            for (acc, kij) in kt_u.iter_mut().zip(k) {
                *acc += ui * kij;
            }
        }
        for j in 0..m {
            if !(kt_u[j] > 0.0) || !kt_u[j].is_finite() {
                return None;
            }
            self.v[j] = self.b[j] / kt_u[j];
        }
        let out_of_range = |x: &f64| !(x.abs() < SCALING_BOUND && x.abs() > 1.0 / SCALING_BOUND);
        if self.u.iter().any(out_of_range) || self.v.iter().any(out_of_range) {
            return None;
        }
        Some(viol)
    }
}

/// Entropic plan for a precomputed cost matrix.
///
/// Fails with [`Error::Convergence`] if the row/column marginals are not
/// within `tol` after `max_iter` scaling sweeps (counted over all annealing
/// stages).
pub fn sinkhorn_with_cost(
    cost: &Matrix,
    a: &[f64],
    b: &[f64],
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Coupling> {
    let (n, m) = cost.shape();
    if a.len() != n || b.len() != m {
        return Err(Error::dim(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::config(format!(
            "regularization must be positive, got {eps}"
        )));
    }
    let cmax = cost.as_slice().iter().copied().fold(0.0, f64::max);
    let mut schedule = Vec::new();
    let mut e = cmax.max(eps);
    while e > eps {
        schedule.push(e);
        e *= ANNEAL_FACTOR;
    }
    schedule.push(eps);

    let mut st = State {
        cost,
        a,
        b,
        f: vec![0.0; n],
        g: vec![0.0; m],
        u: vec![1.0; n],
        v: vec![1.0; m],
        kernel: vec![0.0; n * m],
        scratch: vec![0.0; n.max(m)],
    };

    let min_mass = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let stop = tol.max(ROUNDING_START * min_mass);
    let mut iters = 0usize;
    let mut viol = f64::INFINITY;
    let last = schedule.len() - 1;
    for (stage, &e) in schedule.iter().enumerate() {
        st.rebuild(e);
        let final_stage = stage == last;
        let mut stage_iters = 0usize;
        loop {
            if !final_stage && stage_iters >= STAGE_ITERS {
                break;
            }
            let budget_left = iters < max_iter;
            match st.sweep(budget_left) {
                Some(v) => {
                    viol = v;
                    if viol <= stop && stage_iters > 0 {
                        break;
                    }
                    if !budget_left {
                        break;
                    }
                }
                None => {
                    st.rebuild(e);
                }
            }
            iters += 1;
            stage_iters += 1;
        }
        if iters >= max_iter && !final_stage {
            return Err(Error::Convergence {
                iterations: iters,
                violation: viol,
            });
        }
    }

    let mut plan = Matrix::zeros(n, m);
    for i in 0..n {
        let k = &st.kernel[i * m..(i + 1) * m];
        let row = plan.row_mut(i);
        for j in 0..m {
            row[j] = st.u[i] * k[j] * st.v[j];
        }
    }
    let c = Coupling::new_unchecked(plan.clone(), a.to_vec(), b.to_vec(), eps)?;
    let v = c.marginal_violation();
    if v <= tol {
        return Ok(c);
    }
    if v <= stop {
        let c =
            Coupling::new_unchecked(round_to_feasible(plan, a, b), a.to_vec(), b.to_vec(), eps)?;
        if c.marginal_violation() <= tol {
            return Ok(c);
        }
    }
    Err(Error::Convergence {
        iterations: iters,
        violation: v,
    })
}

/// Map a nearly feasible nonnegative plan to one with marginals exactly
/// `(a, b)`: shrink rows then columns that exceed their mass, then spread
/// the missing mass as a rank-one product of the row and column deficits.
pub fn round_to_feasible(mut plan: Matrix, a: &[f64], b: &[f64]) -> Matrix {
    let (n, m) = plan.shape();
    let rows = plan.row_sums();
    for i in 0..n {
        if rows[i] > a[i] {
            let s = a[i] / rows[i];
            plan.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
    }
    let cols = plan.col_sums();
    let scale: Vec<f64> = (0..m)
        .map(|j| if cols[j] > b[j] { b[j] / cols[j] } else { 1.0 })
        .collect();
    for i in 0..n {
        plan.row_mut(i)
            .iter_mut()
            .zip(&scale)
            .for_each(|(x, s)| *x *= s);
    }
    let er: Vec<f64> = a
        .iter()
        .zip(plan.row_sums())
        .map(|(a, r)| (a - r).max(0.0))
        .collect();
    let ec: Vec<f64> = b
        .iter()
        .zip(plan.col_sums())
        .map(|(b, c)| (b - c).max(0.0))
        .collect();
    let total: f64 = er.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            let ri = er[i] / total;
            plan.row_mut(i)
                .iter_mut()
                .zip(&ec)
                .for_each(|(x, c)| *x += ri * c);
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{exact_plan_1d, transport_cost};

    #[test]
    fn median_of_nonzero_entries() {
        let c = Matrix::from_vec(2, 2, vec![0.0, 3.0, 1.0, 2.0]).unwrap();
        assert_eq!(median_nonzero(&c), Some(2.0));
        assert_eq!(median_nonzero(&Matrix::zeros(1, 1)), None);
    }

    #[test]
    fn self_transport_cost_vanishes() {
        let pts = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mu = EmpiricalMeasure::from_samples(2, pts).unwrap();
        let cost = cost_matrix(&mu, &mu).unwrap();
        let med = median_nonzero(&cost).unwrap();
        let cpl = sinkhorn_with_cost(&cost, mu.weights(), mu.weights(), 1e-3 * med, 1e-7, 10_000)
            .unwrap();
        assert!(transport_cost(&cpl, &cost).unwrap() <= 1e-3 * med);
        assert!(cpl.marginal_violation() <= 1e-7);
    }

    #[test]
    fn one_d_matches_monotone_coupling() {
        let a = EmpiricalMeasure::from_samples(1, vec![0.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::from_samples(1, vec![2.0, 3.0]).unwrap();
        let cost = cost_matrix(&a, &b).unwrap();
        let exact = transport_cost(&exact_plan_1d(&a, &b).unwrap(), &cost).unwrap();
        assert_eq!(exact, 4.0);
        let cpl = sinkhorn_plan(&a, &b, 5e-3 * 9.0, 1e-9, 10_000).unwrap();
        let approx = transport_cost(&cpl, &cost).unwrap();
        assert!((approx - exact).abs() / exact < 0.05, "{approx}");
    }

    #[test]
    fn non_convergence_reports_violation() {
        let a = EmpiricalMeasure::from_samples(1, vec![0.0, 1.0, 2.5]).unwrap();
        let b = EmpiricalMeasure::from_samples(1, vec![0.3, 2.0, 9.0]).unwrap();
        let err = sinkhorn_plan(&a, &b, 1e-4, 1e-15, 3).unwrap_err();
        match err {
            Error::Convergence {
                iterations,
                violation,
            } => {
                assert_eq!(iterations, 3);
                assert!(violation > 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rounding_restores_marginals() {
        let a = [0.5, 0.5];
        let b = [0.25, 0.75];
        let p = Matrix::from_vec(2, 2, vec![0.2, 0.31, 0.04, 0.44]).unwrap();
        let r = round_to_feasible(p, &a, &b);
        for (s, w) in r.row_sums().iter().zip(&a) {
            assert!((s - w).abs() < 1e-15);
        }
        for (s, w) in r.col_sums().iter().zip(&b) {
            assert!((s - w).abs() < 1e-15);
        }
        assert!(r.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tiny_regularization_stays_finite() {
        let a = EmpiricalMeasure::from_samples(2, vec![0.0, 0.0, 10.0, 0.0, 0.0, 10.0]).unwrap();
        let b = EmpiricalMeasure::from_samples(2, vec![0.5, 0.1, 9.0, 1.0, 0.0, 11.0]).unwrap();
        let cpl = sinkhorn_plan(&a, &b, 1e-3, 1e-9, 10_000).unwrap();
        assert!(cpl.plan().as_slice().iter().all(|p| p.is_finite()));
        assert!(cpl.is_deterministic(1e-6));
    }
}
