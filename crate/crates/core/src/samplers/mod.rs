//! The benchmark, saturated and tempered SMC samplers and their RCC
//! variants.
//!
//! Every step runs: propagate/reweight (parallel over particles) →
//! ESS → resample if `ESS < threshold_fraction · N` → MCMC sweep (parallel)
//! → record. Each particle draws from a stream keyed by
//! `(seed, step, particle index)`, so results do not depend on the number of
//! worker threads.

mod engine;
mod summary;

pub use summary::{posterior_intensity_summary, summarize_segment, GridPoint, SegmentSummary};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{ExtensionMix, MoveMix};
use crate::model::{Hyperparams, StaticParams, TickData};
use crate::particle::ParticleSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Benchmark,
    Saturated,
    Tempered,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Benchmark => "benchmark",
            Flavor::Saturated => "saturated",
            Flavor::Tempered => "tempered",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub flavor: Flavor,
    pub rcc: bool,
    pub n_particles: usize,
    /// MCMC iterates per step (`M`).
    pub mcmc_iterates: usize,
    /// Inference times `t_1 < ... < t_m`.
    pub inference_times: Vec<f64>,
    /// Resample when ESS falls below this fraction of N.
    pub threshold_fraction: f64,
    pub seed: u64,
    pub hp: Hyperparams,
    pub moves: MoveMix,
    pub extension: ExtensionMix,
    /// Number of most recent latent jumps the RCC sweeps may move.
    pub rcc_window: usize,
    /// Tempered only: also sweep after the space-extension steps.
    pub sweep_on_extension: bool,
    /// Hold (μ, σ) at these values instead of inferring them.
    pub fixed_static: Option<StaticParams>,
    /// Evaluation points strictly inside each segment (plus its right end).
    pub points_per_segment: usize,
    /// Largest span `j` for which `[t_{n-j}, t_n]` mean rates are kept.
    pub rate_spans: usize,
}

impl SamplerConfig {
    pub fn new(flavor: Flavor, n_particles: usize, mcmc_iterates: usize, inference_times: Vec<f64>, seed: u64) -> Self {
        Self {
            flavor,
            rcc: false,
            n_particles,
            mcmc_iterates,
            inference_times,
            threshold_fraction: 0.5,
            seed,
            hp: Hyperparams::default(),
            moves: MoveMix::default(),
            extension: ExtensionMix::default(),
            rcc_window: 20,
            sweep_on_extension: false,
            fixed_static: None,
            points_per_segment: 10,
            rate_spans: 10,
        }
    }

    /// Grid `step, 2·step, ...` up to `stop` (inclusive up to rounding).
    pub fn regular_grid(step: f64, stop: f64) -> Vec<f64> {
        let n = (stop / step + 1e-9).floor() as usize;
        (1..=n).map(|i| i as f64 * step).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.moves.validate()?;
        self.extension.validate()?;
        if self.n_particles < 2 {
            return Err(invalid("n_particles", "need at least 2 particles"));
        }
        let t = &self.inference_times;
        if t.is_empty() {
            return Err(invalid("inference_times", "need at least one inference time"));
        }
        if !(t[0] > 0.0) || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("inference_times", "must be > 0 and strictly increasing"));
        }
        if t[t.len() - 1] > self.hp.horizon * (1.0 + 1e-12) {
            return Err(invalid(
                "inference_times",
                format!("last time {} exceeds the horizon {}", t[t.len() - 1], self.hp.horizon),
            ));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(invalid("threshold_fraction", "must lie in (0, 1]"));
        }
        if self.rcc && self.rcc_window == 0 {
            return Err(invalid("rcc_window", "must be >= 1"));
        }
        Ok(())
    }

    /// Move mix actually used by the sweeps.
    pub(crate) fn sweep_mix(&self) -> MoveMix {
        let mut mix = if self.fixed_static.is_some() {
            self.moves.without_static()
        } else {
            self.moves.clone()
        };
        if self.rcc {
            mix.window_limit = Some(self.rcc_window);
        }
        mix
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// The latent process grows to a new inference time.
    Extension,
    /// New observations enter the likelihood.
    DataAdd,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Extension => "extension",
            StepKind::DataAdd => "data_add",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    /// 1-based index of the inference time the step belongs to.
    pub segment: usize,
    pub kind: StepKind,
    /// ESS after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerTrace {
    pub flavor: Flavor,
    pub rcc: bool,
    pub n_particles: usize,
    pub mcmc_iterates: usize,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// One summary per completed inference time.
    pub segments: Vec<SegmentSummary>,
    /// Filtered medians per segment; smoothed medians once the run ends.
    pub grid: Vec<GridPoint>,
    pub log_evidence: f64,
    pub final_system: ParticleSystem,
}

impl SamplerTrace {
    pub fn resampling_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.resampled).count() as f64 / self.records.len() as f64
    }

    pub fn min_ess(&self) -> f64 {
        self.records.iter().map(|r| r.ess).fold(f64::INFINITY, f64::min)
    }

    pub fn wall_time_s(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum::<f64>() / 1000.0
    }

    /// Whether the run reached its last inference time.
    pub fn is_complete(&self, cfg: &SamplerConfig) -> bool {
        self.segments.len() == cfg.inference_times.len()
    }
}

/// A failed run, with the trace up to the failure when there is one.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: Option<Box<SamplerTrace>>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

/// Runs the sampler selected by `cfg.flavor`.
pub fn run(data: &TickData, cfg: &SamplerConfig) -> std::result::Result<SamplerTrace, RunError> {
    cfg.validate()?;
    match cfg.flavor {
        Flavor::Benchmark => run_benchmark(data, cfg),
        Flavor::Saturated => run_saturated(data, cfg),
        Flavor::Tempered => run_tempered(data, cfg),
    }
}

pub fn run_benchmark(data: &TickData, cfg: &SamplerConfig) -> std::result::Result<SamplerTrace, RunError> {
    check_flavor(cfg, Flavor::Benchmark)?;
    engine::Engine::new(data, cfg)?.run_benchmark()
}

pub fn run_saturated(data: &TickData, cfg: &SamplerConfig) -> std::result::Result<SamplerTrace, RunError> {
    check_flavor(cfg, Flavor::Saturated)?;
    engine::Engine::new(data, cfg)?.run_saturated()
}

pub fn run_tempered(data: &TickData, cfg: &SamplerConfig) -> std::result::Result<SamplerTrace, RunError> {
    check_flavor(cfg, Flavor::Tempered)?;
    engine::Engine::new(data, cfg)?.run_tempered()
}

fn check_flavor(cfg: &SamplerConfig, want: Flavor) -> Result<()> {
    cfg.validate()?;
    if cfg.flavor != want {
        return Err(invalid("flavor", format!("expected {want}, config says {}", cfg.flavor)));
    }
    Ok(())
}
