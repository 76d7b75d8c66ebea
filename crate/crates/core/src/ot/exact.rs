//! Unregularized solvers.

use super::measure::{Coupling, Matrix};
use super::{cost_matrix, EmpiricalMeasure};
use crate::error::{Error, Result};

const BRUTE_FORCE_MAX: usize = 8;

/// Monotone coupling of two measures on the line.
///
/// Both supports are sorted and mass is moved north-west corner style;
/// this is the optimal plan for any convex cost.
pub fn exact_plan_1d(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Coupling> {
    if source.dim() != 1 || target.dim() != 1 {
        return Err(Error::dim(format!(
            "monotone coupling needs 1-D measures, got {} and {}",
            source.dim(),
            target.dim()
        )));
    }
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.points()[a].total_cmp(&m.points()[b]));
        idx
    };
    let (si, ti) = (order(source), order(target));
    let (a, b) = (source.weights(), target.weights());
    let mut plan = Matrix::zeros(a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[si[0]], b[ti[0]]);
    loop {
        let q = ra.min(rb);
        plan.set(si[i], ti[j], plan.get(si[i], ti[j]) + q);
        ra -= q;
        rb -= q;
        // one side is now exactly exhausted; rounding residue on the other
        // is dropped once either support runs out
        if ra <= 0.0 {
            i += 1;
            if i == si.len() {
                break;
            }
            ra = a[si[i]];
        }
        if rb <= 0.0 {
            j += 1;
            if j == ti.len() {
                break;
            }
            rb = b[ti[j]];
        }
    }
    Coupling::new(plan, a.to_vec(), b.to_vec(), 0.0, 1e-9)
}

fn check_square_uniform(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<usize> {
    if source.dim() != target.dim() {
        return Err(Error::dim(format!(
            "source has dimension {}, target {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.len() != target.len() || !source.is_uniform() || !target.is_uniform() {
        return Err(Error::config(format!(
            "permutation solvers need two uniform clouds of equal size, got {} and {} atoms",
            source.len(),
            target.len()
        )));
    }
    Ok(source.len())
}

fn permutation_coupling(
    perm: &[usize],
    source: &EmpiricalMeasure,
    target: &EmpiricalMeasure,
) -> Result<Coupling> {
    let n = perm.len();
    let mut plan = Matrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        plan.set(i, j, 1.0 / n as f64);
    }
    Coupling::new(
        plan,
        source.weights().to_vec(),
        target.weights().to_vec(),
        0.0,
        1e-9,
    )
}

/// Minimum-cost assignment (shortest augmenting paths with potentials).
/// Returns `perm[i]` = column assigned to row `i`.
fn hungarian(cost: &Matrix) -> Vec<usize> {
    let n = cost.rows();
    // 1-based arrays: column 0 is a virtual sink
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let row = cost.row(i0 - 1);
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Optimal permutation plan between two uniform clouds of equal size.
pub fn assignment_plan(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Coupling> {
    check_square_uniform(source, target)?;
    let cost = cost_matrix(source, target)?;
    permutation_coupling(&hungarian(&cost), source, target)
}

/// Exhaustive search over permutations; a test oracle for at most eight
/// atoms per side. Ties resolve to the lexicographically smallest
/// permutation.
pub fn brute_force_plan(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Coupling> {
    let big = source.len().max(target.len());
    if big > BRUTE_FORCE_MAX {
        return Err(Error::OracleSize(big));
    }
    let n = check_square_uniform(source, target)?;
    let cost = cost_matrix(source, target)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    permutation_coupling(&best, source, target)
}

/// Advance to the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::transport_cost;

    fn line(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_samples(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn permutations_enumerate_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn monotone_plan_unequal_sizes() {
        let a = line(&[0.0, 1.0]);
        let b = EmpiricalMeasure::new(1, vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        let p = exact_plan_1d(&a, &b).unwrap();
        let expect = [0.25, 0.25, 0.0, 0.0, 0.25, 0.25];
        for (x, e) in p.plan().as_slice().iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_plan_unsorted_input() {
        let a = line(&[3.0, 1.0, 2.0]);
        let b = line(&[20.0, 30.0, 10.0]);
        let p = exact_plan_1d(&a, &b).unwrap();
        // 1 -> 10, 2 -> 20, 3 -> 30
        assert!(p.plan().get(1, 2) > 0.0);
        assert!(p.plan().get(2, 0) > 0.0);
        assert!(p.plan().get(0, 1) > 0.0);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let a = EmpiricalMeasure::from_samples(
            2,
            vec![0.0, 0.0, 1.0, 2.0, 3.0, -1.0, 0.5, 0.5, 2.0, 2.0],
        )
        .unwrap();
        let b = EmpiricalMeasure::from_samples(
            2,
            vec![1.0, 1.0, -1.0, 0.0, 2.5, 2.5, 0.0, 3.0, 3.0, 0.0],
        )
        .unwrap();
        let c = cost_matrix(&a, &b).unwrap();
        let h = transport_cost(&assignment_plan(&a, &b).unwrap(), &c).unwrap();
        let bf = transport_cost(&brute_force_plan(&a, &b).unwrap(), &c).unwrap();
        assert!((h - bf).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rejects_large_inputs() {
        let xs: Vec<f64> = (0..9).map(f64::from).collect();
        let a = line(&xs);
        assert!(matches!(
            brute_force_plan(&a, &a),
            Err(Error::OracleSize(9))
        ));
    }

    #[test]
    fn brute_force_tie_break_is_lexicographic() {
        // Any permutation has the same cost when all target points coincide
        // up to a symmetric arrangement; identity must win.
        let a = EmpiricalMeasure::from_samples(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::from_samples(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = brute_force_plan(&a, &b).unwrap();
        assert!(p.plan().get(0, 0) > 0.0);
    }

    #[test]
    fn assignment_needs_equal_uniform_clouds() {
        let a = line(&[0.0, 1.0]);
        let b = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(assignment_plan(&a, &b), Err(Error::Config(_))));
    }
}
