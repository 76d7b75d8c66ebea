//! Small statistical helpers for Monte-Carlo checks.

/// Sample mean.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    (variance(x) / x.len() as f64).sqrt()
}

/// Kolmogorov–Smirnov distance between the sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// KS distance between a sample of positive integers and an integer-valued
/// CDF (both step functions jump only at integers).
pub fn ks_statistic_discrete<F: Fn(u64) -> f64>(sample: &[u64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_unstable();
    let n = s.len() as f64;
    let max = *s.last().unwrap_or(&0);
    let mut d = 0.0f64;
    let mut idx = 0;
    for k in 0..=max {
        while idx < s.len() && s[idx] <= k {
            idx += 1;
        }
        d = d.max((idx as f64 / n - cdf(k)).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value for distance `d` at sample size `n`
/// (with the Stephens small-sample correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// CDF of the geometric law on `{1, 2, …}` with success probability `p`.
pub fn geometric_cdf(p: f64, k: u64) -> f64 {
    1.0 - (1.0 - p).powf(k as f64)
}

/// Leave-one-out jackknife standard error of `stat` over groups.
pub fn jackknife_se<T, F: Fn(&[&T]) -> f64>(groups: &[T], stat: F) -> f64 {
    let g = groups.len();
    if g < 2 {
        return f64::NAN;
    }
    let loo: Vec<f64> = (0..g)
        .map(|i| {
            let rest: Vec<&T> = groups
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, x)| x)
                .collect();
            stat(&rest)
        })
        .collect();
    if loo.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let m = mean(&loo);
    ((g as f64 - 1.0) / g as f64 * loo.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
        assert!((std_error(&[1.0, 2.0, 3.0]) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_on_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
        assert!(ks_pvalue(d, 100) > 0.99);
        assert!(ks_pvalue(0.3, 100) < 1e-6);
    }

    #[test]
    fn discrete_ks_exact_law() {
        // sample matching the geometric(1/2) probabilities on 1..3 exactly
        let s = [1, 1, 1, 1, 2, 2, 3, 3];
        let d = ks_statistic_discrete(&s, |k| geometric_cdf(0.5, k));
        assert!((d - 0.125).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_mean_matches_se() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let se = jackknife_se(&x, |g| g.iter().map(|v| **v).sum::<f64>() / g.len() as f64);
        assert!((se - std_error(&x)).abs() < 1e-12);
    }
}
