use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{integrated_unchecked, intensity_path_unchecked, Hyperparams};
use crate::particle::{weighted_quantile, ParticleSystem};

/// Posterior summaries once the data up to `t` are in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub t: f64,
    /// Weighted median of λ(t).
    pub lambda_median: f64,
    /// Weighted mean of λ(t).
    pub lambda_mean: f64,
    /// `rates[j-1]`: weighted median of the mean intensity over
    /// `[t_{n-j}, t]`, for the spans available at this step.
    pub rates: Vec<f64>,
    /// Weighted mean of the mean intensity over `[0, t]`.
    pub cumulative_rate_mean: f64,
    /// 5%, 50% and 95% weighted quantiles.
    pub mu_quantiles: [f64; 3],
    pub sigma_quantiles: [f64; 3],
    pub log_evidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub segment: usize,
    /// Median λ(t) given the data up to the end of `segment`.
    pub filtered: f64,
    /// Median λ(t) given all the data.
    pub smoothed: Option<f64>,
}

/// Weighted median of λ at each of the increasing `grid` times.
pub fn posterior_intensity_summary(ps: &ParticleSystem, hp: &Hyperparams, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("evaluation grid must be non-decreasing".into()));
    }
    if let Some(&last) = grid.last() {
        if let Some(p) = ps.particles.iter().find(|p| last > p.pp.window_end()) {
            return Err(Error::Domain(format!(
                "grid reaches {last} beyond a particle window [0, {}]",
                p.pp.window_end()
            )));
        }
    }
    let w = ps.weights()?;
    let paths: Vec<Vec<f64>> = ps
        .particles
        .par_iter()
        .map(|p| intensity_path_unchecked(&p.pp, hp, grid))
        .collect();
    (0..grid.len())
        .map(|g| {
            let v: Vec<f64> = paths.iter().map(|p| p[g]).collect();
            weighted_quantile(&v, &w, 0.5)
        })
        .collect()
}

/// Summary at the inference time `t` plus filtered medians on `points`
/// (increasing, ending at `t`). `span_starts[j-1] = t_{n-j}`.
pub fn summarize_segment(
    ps: &ParticleSystem,
    hp: &Hyperparams,
    t: f64,
    points: &[f64],
    span_starts: &[f64],
    log_evidence: f64,
) -> Result<(SegmentSummary, Vec<f64>)> {
    let filtered = posterior_intensity_summary(ps, hp, points)?;
    let w = ps.weights()?;
    let per_particle: Vec<(f64, Vec<f64>, f64)> = ps
        .particles
        .par_iter()
        .map(|p| {
            let (times, marks) = (p.pp.times(), p.pp.marks());
            let at_t = intensity_path_unchecked(&p.pp, hp, &[t])[0];
            let rates = span_starts
                .iter()
                .map(|&a| integrated_unchecked(times, marks, hp, a, t) / (t - a))
                .collect();
            (at_t, rates, integrated_unchecked(times, marks, hp, 0.0, t) / t)
        })
        .collect();
    let lam: Vec<f64> = per_particle.iter().map(|x| x.0).collect();
    let lambda_mean = lam.iter().zip(&w).map(|(l, w)| l * w).sum();
    let cumulative_rate_mean = per_particle.iter().zip(&w).map(|(x, w)| x.2 * w).sum();
    let rates = (0..span_starts.len())
        .map(|j| {
            let v: Vec<f64> = per_particle.iter().map(|x| x.1[j]).collect();
            weighted_quantile(&v, &w, 0.5)
        })
        .collect::<Result<Vec<f64>>>()?;
    let quantiles = |v: Vec<f64>| -> Result<[f64; 3]> {
        Ok([
            weighted_quantile(&v, &w, 0.05)?,
            weighted_quantile(&v, &w, 0.5)?,
            weighted_quantile(&v, &w, 0.95)?,
        ])
    };
    let summary = SegmentSummary {
        t,
        lambda_median: weighted_quantile(&lam, &w, 0.5)?,
        lambda_mean,
        rates,
        cumulative_rate_mean,
        mu_quantiles: quantiles(ps.particles.iter().map(|p| p.sp.mu).collect())?,
        sigma_quantiles: quantiles(ps.particles.iter().map(|p| p.sp.sigma).collect())?,
        log_evidence,
    };
    Ok((summary, filtered))
}
