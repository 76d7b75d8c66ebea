//! TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::MonitorConfig;
use crate::error::{Error, Result};
use crate::synth::StreamSpec;

/// Detectors the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// The tangent-space T²/SPE detector.
    Idd,
    /// Hotelling T² on batch means.
    Hotelling,
    /// Band chart on batch totals.
    CChart,
    /// Max standardized category-share deviation.
    Multinomial,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Idd => "idd",
            DetectorKind::Hotelling => "hotelling",
            DetectorKind::CChart => "c_chart",
            DetectorKind::Multinomial => "multinomial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "idd" => Ok(DetectorKind::Idd),
            "hotelling" => Ok(DetectorKind::Hotelling),
            "c_chart" => Ok(DetectorKind::CChart),
            "multinomial" => Ok(DetectorKind::Multinomial),
            other => Err(Error::config(format!(
                "unknown detector {other:?} (expected idd, hotelling, c_chart or multinomial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub replications: usize,
    /// Target in-control run lengths.
    pub targets: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    /// Monitoring batches per replication used to estimate ARL₀.
    pub null_length: usize,
    /// Changed streams are censored at `horizon_factor × target`.
    pub horizon_factor: f64,
    /// Pre-change monitoring batches before the change.
    pub kappa_offset: usize,
    /// Relative tolerance on the matched ARL₀.
    pub tolerance: f64,
    pub max_bisection: usize,
    /// Order-statistic level of the Hotelling and multinomial charts.
    pub baseline_alpha: f64,
    /// Band half-width multiplier L of the count chart.
    pub c_chart_width: f64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            replications: 10,
            targets: vec![100.0],
            detectors: vec![DetectorKind::Idd, DetectorKind::Hotelling],
            null_length: 500,
            horizon_factor: 10.0,
            kappa_offset: 0,
            tolerance: 0.05,
            max_bisection: 40,
            baseline_alpha: 0.02,
            c_chart_width: 3.0,
            threads: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.targets.is_empty() || self.targets.iter().any(|t| !(*t > 1.0)) {
            return Err(Error::config("targets must be run lengths greater than 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("at least one detector is required"));
        }
        if self.null_length == 0 || !(self.horizon_factor >= 1.0) {
            return Err(Error::config(
                "null_length >= 1 and horizon_factor >= 1 are required",
            ));
        }
        if !(self.tolerance > 0.0) || self.max_bisection == 0 {
            return Err(Error::config(
                "tolerance > 0 and max_bisection >= 1 are required",
            ));
        }
        if !(self.baseline_alpha > 0.0 && self.baseline_alpha < 1.0) || !(self.c_chart_width > 0.0)
        {
            return Err(Error::config(
                "baseline_alpha in (0,1) and c_chart_width > 0 are required",
            ));
        }
        Ok(())
    }
}

/// Everything a command needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Calibration batches per replication or per generated stream.
    pub n0: usize,
    pub monitor: MonitorConfig,
    pub stream: Option<StreamSpec>,
    pub benchmark: BenchmarkConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n0: 100,
            monitor: MonitorConfig::default(),
            stream: None,
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 3 {
            return Err(Error::config("n0 must be at least 3"));
        }
        self.monitor.validate()?;
        self.benchmark.validate()?;
        if let Some(s) = &self.stream {
            s.validate()?;
        }
        Ok(())
    }

    pub fn stream(&self) -> Result<&StreamSpec> {
        self.stream
            .as_ref()
            .ok_or_else(|| Error::config("this command needs a [stream] section"))
    }
}

/// Annotated configuration reference printed by `--print-schema`.
pub const SCHEMA: &str = r#"# Run configuration (TOML). Every key is optional; values shown are the
# defaults. Unknown keys are rejected.

seed = 0          # master seed; every random draw is derived from it
n0 = 100          # calibration batches

[monitor]
alpha_t2 = 0.01           # T² chart level
alpha_spe = 0.01          # SPE chart level
# k = 5                   # fixed number of components; default: by variance
variance_fraction = 0.9   # explained variance used to pick k

[monitor.barycenter]
m_atoms = 128             # support size of the fitted barycenter
tol = 1e-5                # relative decrease of the functional to stop at
max_iter = 50
init_seed = 0

[monitor.solver]
method = "sinkhorn"       # "sinkhorn" or "exact"
eps_scale = 0.005         # regularization / median cost entry
marginal_tol = 1e-7
max_iter = 10000

# [stream] is required by `simulate` and `benchmark`, and by `calibrate`
# when no stream file is given.
[stream]
d = 2                     # dimension (1 for discrete scenarios)
n = 100                   # points per batch
len = 200                 # batches written by `simulate`
# kappa = 150             # last pre-change batch; default len (no change)
epsilon = 0.3             # deformation magnitude (continuous scenarios)
beta = 5.0                # deformation smoothness
j = 3                     # deformation directions
# [stream.mixture]        # product-Beta base mixture; default: 4 components
# weights = [0.25, 0.25, 0.25, 0.25]
# components = [{ a = [...], b = [...] }, ...]

[stream.scenario]
kind = "barycenter"       # one of the blocks below
delta_loc = 0.15
# kind = "mm_reweight"        delta_mm = 2.0, pair_antipodal = true
# kind = "copula_shift"       rho = 0.6
# kind = "gaussian_shift"     sigma = 0.5, delta (required)
# kind = "poisson_spike"      lambda0 = 5.0, alpha = 0.05, k_star = 25
# kind = "poisson_heavy_tail" lambda0 = 5.0, alpha = 0.05, lambda1 = 15.0, mean_matched = false
# kind = "ordinal_drift"      p0 = [0.3, 0.25, 0.2, 0.12, 0.08, 0.05], ramp = 20

[benchmark]
replications = 10
targets = [100.0]                  # target in-control run lengths
detectors = ["idd", "hotelling"]   # idd, hotelling, c_chart, multinomial
null_length = 500                  # null monitoring batches per replication
horizon_factor = 10.0              # changed streams censored at factor × target
kappa_offset = 0                   # in-control monitoring batches before the change
tolerance = 0.05                   # relative tolerance of the matched ARL0
max_bisection = 40
baseline_alpha = 0.02              # order-statistic level of hotelling / multinomial
c_chart_width = 3.0                # band multiplier L of the count chart
threads = 0                        # 0 = all cores
"#;
