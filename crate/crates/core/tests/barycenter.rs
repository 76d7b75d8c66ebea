use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use tangent_cpd::barycenter::{fit_barycenter, frechet_functional, BarycenterConfig};
use tangent_cpd::ot::{cost_matrix, exact_plan_1d, transport_cost, EmpiricalMeasure, SolverConfig};
use tangent_cpd::seeds::rng_for;

fn w2_sq(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    SolverConfig::exact().solve(a, b).unwrap().cost_value()
}

#[test]
fn one_dimensional_barycenter_averages_quantiles() {
    // equal-size uniform measures in 1-D: the barycenter is the average of sorted samples
    let mut rng = rng_for(5, &[]);
    let n = 12;
    let measures: Vec<EmpiricalMeasure> = (0..4)
        .map(|k| {
            let pts: Vec<f64> = (0..n)
                .map(|_| rng.random::<f64>() * (1.0 + k as f64))
                .collect();
            EmpiricalMeasure::from_samples(1, pts).unwrap()
        })
        .collect();
    let mut expected = vec![0.0; n];
    for m in &measures {
        let mut s = m.points().to_vec();
        s.sort_by(f64::total_cmp);
        for (e, x) in expected.iter_mut().zip(s) {
            *e += x / measures.len() as f64;
        }
    }
    let oracle = EmpiricalMeasure::from_samples(1, expected).unwrap();
    let config = BarycenterConfig {
        m_atoms: n,
        max_iter: 20,
        ..BarycenterConfig::default()
    };
    let fit = fit_barycenter(&measures, &config, &SolverConfig::exact()).unwrap();
    assert!(w2_sq(&fit.measure, &oracle) < 1e-12);
    let f_oracle = frechet_functional(&oracle, &measures, &SolverConfig::exact()).unwrap();
    assert_abs_diff_eq!(fit.functional, f_oracle, epsilon = 1e-12);
}

#[test]
fn symmetric_translations_recover_the_center() {
    let mut rng = rng_for(8, &[]);
    let x =
        EmpiricalMeasure::from_samples(2, (0..40).map(|_| rng.random::<f64>()).collect()).unwrap();
    let delta = [0.4, -0.3];
    let norm = (0.4f64 * 0.4 + 0.3 * 0.3).sqrt();
    let plus = x.translated(&delta).unwrap();
    let minus = x.translated(&[-0.4, 0.3]).unwrap();
    let config = BarycenterConfig {
        m_atoms: 20,
        ..BarycenterConfig::default()
    };
    let fit = fit_barycenter(&[plus, minus], &config, &SolverConfig::exact()).unwrap();
    assert!(w2_sq(&fit.measure, &x).sqrt() <= 0.05 * norm);
    assert!(fit.functional >= norm * norm - 1e-12);
}

#[test]
fn permutation_of_inputs_does_not_change_the_fit() {
    let mut rng = rng_for(13, &[]);
    let mut measures: Vec<EmpiricalMeasure> = (0..6)
        .map(|_| {
            EmpiricalMeasure::from_samples(2, (0..30).map(|_| rng.random::<f64>()).collect())
                .unwrap()
        })
        .collect();
    let config = BarycenterConfig {
        m_atoms: 10,
        max_iter: 5,
        ..BarycenterConfig::default()
    };
    let solver = SolverConfig::default();
    let a = fit_barycenter(&measures, &config, &solver).unwrap();
    measures.shuffle(&mut rng);
    let b = fit_barycenter(&measures, &config, &solver).unwrap();
    assert!(w2_sq(&a.measure, &b.measure) < 1e-20);
    assert_abs_diff_eq!(a.functional, b.functional, epsilon = 1e-12);
}

#[test]
fn functional_matches_averaged_exact_costs() {
    let mut rng = rng_for(21, &[]);
    let measures: Vec<EmpiricalMeasure> = (0..5)
        .map(|_| {
            EmpiricalMeasure::from_samples(1, (0..9).map(|_| rng.random::<f64>()).collect())
                .unwrap()
        })
        .collect();
    let cand = EmpiricalMeasure::from_samples(1, (0..7).map(|i| i as f64 / 6.0).collect()).unwrap();
    let oracle: f64 = measures
        .iter()
        .map(|m| {
            transport_cost(
                &exact_plan_1d(&cand, m).unwrap(),
                &cost_matrix(&cand, m).unwrap(),
            )
            .unwrap()
        })
        .sum::<f64>()
        / 5.0;
    let f = frechet_functional(&cand, &measures, &SolverConfig::exact()).unwrap();
    assert_abs_diff_eq!(f, oracle, epsilon = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn history_never_increases(seed in 0u64..1000, d in 1usize..=3, sinkhorn in any::<bool>()) {
        let mut rng = rng_for(seed, &[]);
        let measures: Vec<EmpiricalMeasure> = (0..4)
            .map(|_| EmpiricalMeasure::from_samples(d, (0..8 * d).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect();
        let solver = if sinkhorn { SolverConfig::default() } else { SolverConfig::exact() };
        let config = BarycenterConfig { m_atoms: 8, max_iter: 8, init_seed: seed, ..BarycenterConfig::default() };
        let fit = fit_barycenter(&measures, &config, &solver).unwrap();
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*fit.history.last().unwrap(), fit.functional);
        prop_assert!(fit.measure.weights().iter().all(|w| (w * 8.0 - (w * 8.0).round()).abs() < 1e-9));
        prop_assert!(fit.measure.points().iter().all(|x| x.is_finite()));
    }
}
