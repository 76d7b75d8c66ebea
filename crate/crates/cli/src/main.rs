use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tangent_cpd::harness::{self, DetectorKind, HarnessConfig, SCHEMA};
use tangent_cpd::{Error, Result};

/// Exit status for a benchmark point that could not be matched or a failed
/// verification check.
const EXIT_FAILED_POINT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tangent-cpd",
    version,
    about = "Change-point detection for streams of point clouds"
)]
struct Cli {
    /// Print the annotated configuration reference and exit.
    #[arg(long)]
    print_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a monitor model from a stream file or the configured generator.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Calibration stream (every batch is used). Without it, the first
        /// n0 batches of the configured stream are generated.
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a stream file with a saved model.
    Monitor {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// Alarm file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured synthetic stream as a stream file.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare detectors at matched in-control run length.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Report path prefix; `.json` and `.csv` are written.
        #[arg(long)]
        out: PathBuf,
        /// Target in-control run length (repeatable).
        #[arg(long = "target-arl0")]
        target_arl0: Vec<f64>,
        /// Detector to include (repeatable): idd, hotelling, c_chart, multinomial.
        #[arg(long)]
        detector: Vec<String>,
    },
    /// Run the built-in oracle and invariant checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<HarnessConfig> {
    let mut c = match &common.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(t) = common.threads {
        c.benchmark.threads = t;
    }
    c.validate()?;
    Ok(c)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Calibrate {
            common,
            stream,
            out,
        } => {
            let config = load_config(&common)?;
            let model = harness::cmd_calibrate(&config, stream.as_deref())?;
            harness::save_model(&model, &out)?;
        }
        Command::Monitor { model, stream, out } => {
            let model = harness::load_model(&model)?;
            let summary = harness::cmd_monitor(&model, &stream, output(out.as_deref())?)?;
            log::info!(
                "{} batches, {} alarms, first at {:?}",
                summary.batches,
                summary.alarms,
                summary.first_alarm
            );
        }
        Command::Simulate { common, out } => {
            let config = load_config(&common)?;
            harness::cmd_simulate(&config, output(out.as_deref())?)?;
        }
        Command::Benchmark {
            common,
            out,
            target_arl0,
            detector,
        } => {
            let mut config = load_config(&common)?;
            if !target_arl0.is_empty() {
                config.benchmark.targets = target_arl0;
            }
            if !detector.is_empty() {
                config.benchmark.detectors = detector
                    .iter()
                    .map(|d| DetectorKind::parse(d))
                    .collect::<Result<_>>()?;
            }
            config.validate()?;
            let report = harness::cmd_benchmark(&config, &out)?;
            for p in &report.points {
                println!(
                    "{:<12} target {:>7.1}  ARL0 {:>8.1} ± {:<6.1} ARL1 {:>7.2} ± {:<5.2} detected {:.2}{}",
                    p.detector.name(),
                    p.target_arl0,
                    p.arl0,
                    p.arl0_se,
                    p.arl1,
                    p.arl1_se,
                    p.detection_rate,
                    if p.matched { "" } else { "  UNMATCHED" }
                );
            }
            if !report.all_matched() {
                return Ok(EXIT_FAILED_POINT);
            }
        }
        Command::Verify { seed, out } => {
            let report = harness::run_verify(seed)?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if let Some(p) = out {
                harness::io::write_text(&p, &report.to_json()?)?;
            }
            if !report.passed() {
                return Ok(EXIT_FAILED_POINT);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
