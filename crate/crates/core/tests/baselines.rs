use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use tangent_cpd::baselines::{HotellingMeanChart, MultinomialMaxDev, PoissonCChart};
use tangent_cpd::ot::EmpiricalMeasure;
use tangent_cpd::seeds::rng_for;

fn gaussian_batches(seed: u64, count: usize, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &[]);
    (0..count)
        .map(|_| {
            (0..n * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

fn measure(d: usize, pts: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_samples(d, pts.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hotelling_is_affine_invariant(seed in 0u64..10_000, scale in 0.2f64..5.0, shear in -2.0f64..2.0, shift in -3.0f64..3.0) {
        let d = 2;
        let raw = gaussian_batches(seed, 30, 20, d);
        let probe = &gaussian_batches(seed + 1, 1, 20, d)[0];
        // x ↦ A x + b with A = [[scale, shear], [0, 1/scale]]
        let map = |pts: &[f64]| -> Vec<f64> {
            pts.chunks(2)
                .flat_map(|p| [scale * p[0] + shear * p[1] + shift, p[1] / scale - shift])
                .collect()
        };
        let plain: Vec<_> = raw.iter().map(|b| measure(d, b)).collect();
        let moved: Vec<_> = raw.iter().map(|b| measure(d, &map(b))).collect();
        let a = HotellingMeanChart::calibrate(&plain, 0.05).unwrap();
        let b = HotellingMeanChart::calibrate(&moved, 0.05).unwrap();
        let sa = a.statistic(&measure(d, probe)).unwrap();
        let sb = b.statistic(&measure(d, &map(probe))).unwrap();
        prop_assert!((sa - sb).abs() <= 1e-7 * (1.0 + sa));
        prop_assert!((a.threshold() - b.threshold()).abs() <= 1e-7 * (1.0 + a.threshold()));
    }
}

#[test]
fn hotelling_needs_enough_batches() {
    let b: Vec<_> = gaussian_batches(1, 3, 10, 3)
        .iter()
        .map(|p| measure(3, p))
        .collect();
    assert!(HotellingMeanChart::calibrate(&b, 0.05).is_err());
}

#[test]
fn c_chart_band_and_false_alarm_rate() {
    let chart = PoissonCChart::new(100.0, 3.0);
    assert_eq!(chart.band(), (70.0, 130.0));
    assert!(!chart.alarm_for_total(130.0));
    assert!(chart.alarm_for_total(130.5));
    assert!(chart.alarm_for_total(69.0));
    assert_eq!(PoissonCChart::new(4.0, 3.0).band().0, 0.0);

    // batch totals of N Pois(λ) draws are Pois(Nλ); with a large mean the
    // 3-sigma band has the normal-theory rate of about 0.0027
    let mut rng = rng_for(2, &[]);
    let pois = Poisson::new(5.0).unwrap();
    let cal: Vec<EmpiricalMeasure> = (0..200)
        .map(|_| {
            measure(
                1,
                &(0..400)
                    .map(|_| pois.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    let chart = PoissonCChart::calibrate(&cal, 3.0).unwrap();
    assert!((chart.c_bar() - 2000.0).abs() < 20.0);
    let total = Poisson::new(2000.0).unwrap();
    let trials = 200_000;
    let alarms = (0..trials)
        .filter(|_| chart.alarm_for_total(total.sample(&mut rng)))
        .count();
    let rate = alarms as f64 / trials as f64;
    assert!((rate - 0.0027).abs() < 0.0012, "rate {rate}");
}

#[test]
fn c_chart_totals_recover_counts() {
    let b = measure(1, &[3.0, 0.0, 7.0, 3.0, 1.0]);
    assert_eq!(PoissonCChart::total(&b).unwrap(), 14.0);
    assert!(PoissonCChart::total(&measure(2, &[1.0, 2.0])).is_err());
}

#[test]
fn multinomial_statistic_by_hand() {
    let chart = MultinomialMaxDev::with_p0(vec![1.0, 2.0, 3.0], vec![0.5, 0.3, 0.2]).unwrap();
    // 10 draws: shares 0.2, 0.3, 0.5
    let b = measure(1, &[1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 3.0]);
    let z1 = 0.3 / (0.25f64 / 10.0).sqrt();
    let z3 = 0.3 / (0.16f64 / 10.0).sqrt();
    assert_abs_diff_eq!(chart.statistic(&b).unwrap(), z1.max(z3), epsilon = 1e-12);
}

#[test]
fn multinomial_calibration_pools_frequencies() {
    let mut rng = rng_for(4, &[]);
    let cal: Vec<EmpiricalMeasure> = (0..50)
        .map(|_| {
            let pts: Vec<f64> = (0..200)
                .map(|_| if rng.random::<f64>() < 0.7 { 1.0 } else { 2.0 })
                .collect();
            measure(1, &pts)
        })
        .collect();
    let chart = MultinomialMaxDev::calibrate(&cal, 0.1).unwrap();
    assert_eq!(chart.p0().len(), 2);
    assert!((chart.p0()[0] - 0.7).abs() < 0.01);
    assert!(chart.threshold() > 0.0);
    let exceed = cal.iter().filter(|b| chart.step(b).unwrap().1).count();
    assert!(exceed <= 5);
}
