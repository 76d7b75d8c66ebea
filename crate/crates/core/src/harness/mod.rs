//! Configuration, file formats, benchmark engine and the command entry
//! points used by the CLI.

pub mod benchmark;
pub mod config;
pub mod io;
pub mod verify;

use std::io::Write;
use std::path::Path;

pub use benchmark::{
    match_scale, run_benchmark, Benchmark, BenchmarkReport, PointReport, REPORT_SCHEMA_VERSION,
};
pub use config::{BenchmarkConfig, DetectorKind, HarnessConfig, SCHEMA};
pub use io::{load_model, read_stream, save_model, AlarmWriter, StreamReader, StreamWriter};
pub use verify::{run_verify, CheckResult, VerifyReport};

use crate::detector::{calibrate, MonitorModel};
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;
use crate::synth::StreamGenerator;

/// Calibrate on every batch of a stream file, or on the first `n0`
/// generated batches of the configured stream when no file is given.
pub fn cmd_calibrate(config: &HarnessConfig, stream: Option<&Path>) -> Result<MonitorModel> {
    let batches: Vec<EmpiricalMeasure> = match stream {
        Some(path) => StreamReader::open(path)?
            .map(|r| r.map(|(_, m)| m))
            .collect::<Result<_>>()?,
        None => {
            let gen = StreamGenerator::new(config.stream()?, config.seed)?;
            (1..=config.n0)
                .map(|t| gen.batch(t))
                .collect::<Result<_>>()?
        }
    };
    calibrate(&batches, &config.monitor)
}

/// Counts reported by [`cmd_monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorSummary {
    pub batches: usize,
    pub alarms: usize,
    pub first_alarm: Option<usize>,
}

/// Monitor a stream file batch by batch, writing one alarm row per batch.
/// Memory is bounded by the model and a single batch.
pub fn cmd_monitor<W: Write>(
    model: &MonitorModel,
    stream: &Path,
    out: W,
) -> Result<MonitorSummary> {
    monitor_reader(model, StreamReader::open(stream)?, out)
}

/// [`cmd_monitor`] over any reader.
pub fn monitor_reader<R: std::io::Read, W: Write>(
    model: &MonitorModel,
    reader: StreamReader<R>,
    out: W,
) -> Result<MonitorSummary> {
    if reader.dim() != model.barycenter().dim() {
        return Err(Error::dim(format!(
            "stream has dimension {} but the model expects {}",
            reader.dim(),
            model.barycenter().dim()
        )));
    }
    let mut writer = AlarmWriter::new(out)?;
    let mut summary = MonitorSummary::default();
    for item in reader {
        let (t, batch) = item?;
        let update = model.step(&batch, t)?;
        summary.batches += 1;
        if update.alarm {
            summary.alarms += 1;
            summary.first_alarm.get_or_insert(t);
        }
        writer.write(&update)?;
    }
    writer.finish()?;
    Ok(summary)
}

/// Write the configured stream (`len` batches, `t = 1..=len`).
pub fn cmd_simulate<W: Write>(config: &HarnessConfig, out: W) -> Result<()> {
    let spec = config.stream()?;
    let gen = StreamGenerator::new(spec, config.seed)?;
    let mut w = StreamWriter::new(out, spec.d)?;
    for t in 1..=spec.len {
        w.write_points(t, &gen.batch_points(t)?)?;
    }
    w.finish()
}

/// Run the benchmark and write `<out>.json` and `<out>.csv`.
pub fn cmd_benchmark(config: &HarnessConfig, out: &Path) -> Result<BenchmarkReport> {
    let report = run_benchmark(&Benchmark::from_config(config)?)?;
    io::write_text(
        &out.with_extension("json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    io::write_text(&out.with_extension("csv"), &report.to_csv()?)?;
    Ok(report)
}
