//! Evaluation of sampler output: resampling rate, ESS, intensity RMSEs
//! against a known profile, one-step-ahead count prediction error, and the
//! variance-growth probe.

mod probe;

pub use probe::{variance_growth_probe, VarianceProbeConfig, VarianceRow, VarianceTable};

use serde::{Deserialize, Serialize};

use crate::datagen::IntensityProfile;
use crate::error::{invalid, Error, Result};
use crate::model::{Hyperparams, TickData};
use crate::particle::ParticleSystem;
use crate::samplers::{posterior_intensity_summary, Flavor, GridPoint, SegmentSummary, StepRecord};

/// Fraction of steps that resampled.
pub fn resampling_rate(records: &[StepRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.resampled).count() as f64 / records.len() as f64
}

pub fn min_ess(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.ess).fold(f64::INFINITY, f64::min)
}

pub fn wall_time_s(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.wall_ms).sum::<f64>() / 1000.0
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (est, truth) in pairs {
        if !est.is_finite() {
            return Err(Error::Domain(format!("non-finite estimate {est}")));
        }
        sum += (est - truth).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no estimates to score".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// RMSE of the filtered median `λ̂(t_n)` against the profile over the
/// inference times. `times` must be the inference grid the summaries were
/// made on.
pub fn rmse_filtered(segments: &[SegmentSummary], times: &[f64], profile: &IntensityProfile) -> Result<f64> {
    if segments.len() != times.len() || segments.iter().zip(times).any(|(s, &t)| s.t != t) {
        return Err(Error::Domain(format!(
            "{} summaries do not match the {} inference times",
            segments.len(),
            times.len()
        )));
    }
    rmse(segments.iter().map(|s| (s.lambda_median, profile.at(s.t))))
}

/// RMSE of the final-system weighted median trajectory on `grid`.
pub fn rmse_smoothed(final_system: &ParticleSystem, hp: &Hyperparams, profile: &IntensityProfile, grid: &[f64]) -> Result<f64> {
    let med = posterior_intensity_summary(final_system, hp, grid)?;
    rmse(med.into_iter().zip(grid.iter().map(|&t| profile.at(t))))
}

/// [`rmse_smoothed`] from stored grid points.
pub fn rmse_smoothed_grid(grid: &[GridPoint], profile: &IntensityProfile) -> Result<f64> {
    let pts = grid
        .iter()
        .map(|g| {
            g.smoothed
                .map(|s| (s, profile.at(g.t)))
                .ok_or_else(|| Error::Domain(format!("grid point {} has no smoothed value", g.t)))
        })
        .collect::<Result<Vec<_>>>()?;
    rmse(pts.into_iter())
}

/// Ticks with time in `[a, b)`.
fn ticks_in_half_open(data: &TickData, a: f64, b: f64) -> usize {
    let t = data.times();
    t.partition_point(|&w| w < b) - t.partition_point(|&w| w < a)
}

/// Root mean square error of `i`-step-ahead count predictions from the
/// span-`j` rate estimates. `λ̂_{n,j}` is the filtered median mean intensity
/// over `[t_{n-j}, t_n]`; it predicts the ticks in `[t_{n+i-j}, t_{n+i})` as
/// `λ̂_{n,j}` times the interval length, or as `1/λ̂_{n,j}` with
/// `literal_inverse`.
pub fn rmspe(
    segments: &[SegmentSummary],
    times: &[f64],
    data: &TickData,
    lag: usize,
    span: usize,
    literal_inverse: bool,
) -> Result<f64> {
    if lag == 0 || span == 0 {
        return Err(invalid("rmspe", "lag and span must be >= 1"));
    }
    if segments.len() != times.len() {
        return Err(Error::Domain("summaries do not match the inference times".into()));
    }
    let t_at = |k: usize| if k == 0 { 0.0 } else { times[k - 1] };
    let mut errs = Vec::new();
    for n in span..=times.len() {
        if n + lag > times.len() {
            break;
        }
        let Some(&rate) = segments[n - 1].rates.get(span - 1) else {
            return Err(Error::Domain(format!("no span-{span} rate stored at step {n}")));
        };
        let (a, b) = (t_at(n + lag - span), t_at(n + lag));
        let predicted = if literal_inverse { 1.0 / rate } else { rate * (b - a) };
        let observed = ticks_in_half_open(data, a, b) as f64;
        errs.push((predicted, observed));
    }
    if errs.is_empty() {
        return Err(Error::Domain(format!(
            "{} inference times are too few for lag {lag} and span {span}",
            times.len()
        )));
    }
    rmse(errs.into_iter())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub flavor: Flavor,
    pub rcc: bool,
    pub n_particles: usize,
    pub mcmc_iterates: usize,
    pub seed: u64,
    pub steps: usize,
    pub resampling_rate: f64,
    pub min_ess: f64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse_filtered: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse_smoothed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmspe: Option<Rmspe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rmspe {
    pub lag: usize,
    pub span: usize,
    pub literal_inverse: bool,
    pub value: f64,
}

impl EvalReport {
    /// Report with the trace statistics only.
    pub fn from_records(flavor: Flavor, rcc: bool, n_particles: usize, mcmc_iterates: usize, seed: u64, records: &[StepRecord]) -> Self {
        Self {
            flavor,
            rcc,
            n_particles,
            mcmc_iterates,
            seed,
            steps: records.len(),
            resampling_rate: resampling_rate(records),
            min_ess: min_ess(records),
            wall_time_s: wall_time_s(records),
            rmse_filtered: None,
            rmse_smoothed: None,
            rmspe: None,
        }
    }
}
