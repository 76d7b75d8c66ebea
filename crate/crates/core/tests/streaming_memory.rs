//! Monitoring a long lazily generated stream keeps memory flat.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use tangent_cpd::barycenter::BarycenterConfig;
use tangent_cpd::detector::{calibrate, run_length, MonitorConfig, RunLength};
use tangent_cpd::ot::{EmpiricalMeasure, SolverConfig};
use tangent_cpd::synth::{Scenario, StreamGenerator, StreamSpec};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

#[test]
fn hundred_thousand_batches_in_bounded_memory() {
    let spec = StreamSpec::new(
        Scenario::GaussianShift {
            sigma: 1.0,
            delta: 0.0,
        },
        1,
        16,
        1,
    );
    let g = StreamGenerator::new(&spec, 1).unwrap();
    let cal: Vec<EmpiricalMeasure> = (1..=30).map(|t| g.batch(t).unwrap()).collect();
    let config = MonitorConfig {
        barycenter: BarycenterConfig {
            m_atoms: 16,
            ..BarycenterConfig::default()
        },
        solver: SolverConfig::exact(),
        ..MonitorConfig::default()
    };
    let model = calibrate(&cal, &config)
        .unwrap()
        .with_thresholds(f64::INFINITY, f64::INFINITY);
    drop(cal);

    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let horizon = 100_000;
    let rl = run_length(&model, g.batches_from(31), horizon).unwrap();
    assert_eq!(rl, RunLength::Censored(horizon));
    let growth = PEAK.load(Ordering::Relaxed) - base;
    // a stored stream would need at least 100_000 × 16 × 8 bytes
    assert!(growth < 64 * 1024, "peak grew by {growth} bytes");
    assert!(LIVE.load(Ordering::Relaxed) <= base + 1024);
}
