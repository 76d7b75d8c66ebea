use std::io::Cursor;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use tangent_cpd::barycenter::BarycenterConfig;
use tangent_cpd::detector::MonitorConfig;
use tangent_cpd::harness::{
    cmd_calibrate, cmd_simulate, load_model, match_scale, monitor_reader, run_benchmark,
    save_model, AlarmWriter, Benchmark, BenchmarkConfig, DetectorKind, HarnessConfig, StreamReader,
    StreamWriter, SCHEMA,
};
use tangent_cpd::ot::EmpiricalMeasure;
use tangent_cpd::synth::{Scenario, StreamGenerator, StreamSpec};
use tangent_cpd::Error;

fn small_config() -> HarnessConfig {
    HarnessConfig::from_toml(
        r#"
seed = 3
n0 = 15

[monitor.barycenter]
m_atoms = 12

[stream]
d = 2
n = 12
len = 20
kappa = 18

[stream.scenario]
kind = "barycenter"
delta_loc = 0.4
"#,
    )
    .unwrap()
}

#[test]
fn stream_files_round_trip() {
    let spec = StreamSpec::new(Scenario::CopulaShift { rho: 0.5 }, 3, 7, 5);
    let g = StreamGenerator::new(&spec, 1).unwrap();
    let mut buf = Vec::new();
    let mut w = StreamWriter::new(&mut buf, 3).unwrap();
    for t in 1..=5 {
        w.write_points(t, &g.batch_points(t).unwrap()).unwrap();
    }
    w.finish().unwrap();
    let back: Vec<(usize, EmpiricalMeasure)> = StreamReader::new(Cursor::new(buf))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(back.len(), 5);
    for (t, m) in back {
        assert_eq!(m, g.batch(t).unwrap());
    }
}

#[test]
fn stream_reader_rejects_malformed_input() {
    let read = |s: &str| {
        StreamReader::new(Cursor::new(s.as_bytes().to_vec()))
            .and_then(|r| r.collect::<Result<Vec<_>, _>>())
    };
    assert!(matches!(read("time,x1\n1,0.0\n"), Err(Error::Parse(_))));
    assert!(matches!(read("t,x1\n2,0.0\n1,0.0\n"), Err(Error::Parse(_))));
    assert!(matches!(read("t,x1\n1,abc\n"), Err(Error::Parse(_))));
    assert!(read("t,x1,x2\n1,0.0\n").is_err());
    assert!(read("t,x1\n1,NaN\n").is_err());
    assert_eq!(read("t,x1\n").unwrap().len(), 0);
}

#[test]
fn calibrated_model_file_round_trips_and_monitors() {
    let config = small_config();
    let model = cmd_calibrate(&config, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.thresholds(), model.thresholds());

    let mut stream = Vec::new();
    cmd_simulate(&config, &mut stream).unwrap();
    let mut alarms = Vec::new();
    let summary = monitor_reader(
        &loaded,
        StreamReader::new(Cursor::new(stream)).unwrap(),
        &mut alarms,
    )
    .unwrap();
    assert_eq!(summary.batches, 20);
    let text = String::from_utf8(alarms).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert_eq!(
        text.lines().filter(|l| l.contains(",true,")).count(),
        summary.alarms
    );
}

#[test]
fn monitor_rejects_wrong_dimension() {
    let model = cmd_calibrate(&small_config(), None).unwrap();
    let reader = StreamReader::new(Cursor::new(b"t,x1\n1,0.5\n".to_vec())).unwrap();
    assert!(matches!(
        monitor_reader(&model, reader, Vec::new()),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn alarm_writer_format() {
    let config = small_config();
    let model = cmd_calibrate(&config, None).unwrap();
    let g = StreamGenerator::new(config.stream().unwrap(), 5).unwrap();
    let u = model.step(&g.batch(1).unwrap(), 1).unwrap();
    let mut out = Vec::new();
    let mut w = AlarmWriter::new(&mut out).unwrap();
    w.write(&u).unwrap();
    w.finish().unwrap();
    let text = String::from_utf8(out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    assert_eq!(row[0], "1");
    assert_eq!(row[1].parse::<f64>().unwrap(), u.stats.t2);
    assert_eq!(row[4], u.triggered_by.as_str());
}

#[test]
fn config_rejects_unknown_keys_and_schema_parses() {
    assert!(matches!(
        HarnessConfig::from_toml("sed = 1\n"),
        Err(Error::Config(_)) | Err(Error::Parse(_))
    ));
    let c = HarnessConfig::from_toml(SCHEMA).unwrap();
    c.validate().unwrap();
}

#[test]
fn match_scale_hits_a_reachable_target() {
    // scores i/1000 for i = 0..1000: P(score > s) = 1 - s approximately
    let scores: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
    let (s, arl, ok) = match_scale(&[&scores], 20.0, 0.05, 60);
    assert!(ok);
    assert!((arl / 20.0 - 1.0).abs() <= 0.05);
    assert!((s - 0.95).abs() < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matched_arl_equals_exposure_over_exceedances(scores in prop::collection::vec(0.0f64..10.0, 50..400), target in 2.0f64..20.0) {
        let (s, arl, ok) = match_scale(&[&scores], target, 0.05, 60);
        let exceed = scores.iter().filter(|&&x| x > s).count();
        if exceed > 0 {
            prop_assert!((arl - scores.len() as f64 / exceed as f64).abs() < 1e-9);
        }
        if ok {
            prop_assert!((arl / target - 1.0).abs() <= 0.05);
        }
    }
}

#[test]
fn benchmark_report_accounting() {
    let stream = StreamSpec::new(
        Scenario::GaussianShift {
            sigma: 1.0,
            delta: 3.0,
        },
        1,
        30,
        1,
    );
    let monitor = MonitorConfig {
        barycenter: BarycenterConfig {
            m_atoms: 15,
            ..BarycenterConfig::default()
        },
        solver: tangent_cpd::ot::SolverConfig::exact(),
        ..MonitorConfig::default()
    };
    let config = BenchmarkConfig {
        replications: 4,
        targets: vec![10.0, 20.0],
        detectors: vec![DetectorKind::Idd, DetectorKind::Hotelling],
        null_length: 200,
        ..BenchmarkConfig::default()
    };
    let b = Benchmark {
        seed: 9,
        n0: 30,
        stream,
        monitor,
        config,
    };
    let report = run_benchmark(&b).unwrap();
    assert_eq!(report.points.len(), 4);
    for p in &report.points {
        assert_eq!(p.replications, 4);
        assert_eq!(p.delays.len() + p.censored + p.early_alarms, 4);
        assert_abs_diff_eq!(p.detection_rate + p.censored_rate, 1.0, epsilon = 1e-12);
        if !p.delays.is_empty() {
            let mean = p.delays.iter().sum::<usize>() as f64 / p.delays.len() as f64;
            assert_abs_diff_eq!(p.arl1, mean, epsilon = 1e-12);
        }
        // a three-sigma jump is caught at once
        assert!(p.delays.iter().all(|&d| d <= 2), "{:?}", p.delays);
    }
    let again = run_benchmark(&b).unwrap();
    assert_eq!(
        serde_json::to_value(&report.points).unwrap(),
        serde_json::to_value(&again.points).unwrap()
    );
    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("schema_version,detector,target_arl0"));
}
