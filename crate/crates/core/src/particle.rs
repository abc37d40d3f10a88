//! Weighted particle bookkeeping: normalization, ESS, systematic
//! resampling and weighted quantiles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Particle;

/// N weighted particles. Random streams are derived on demand from
/// `(seed, step, particle index)`, see [`crate::rng`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub log_weights: Vec<f64>,
    pub step: usize,
}

impl ParticleSystem {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Empty("particle system needs N >= 1".into()));
        }
        let n = particles.len();
        Ok(Self {
            particles,
            log_weights: vec![0.0; n],
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        Ok(normalize(&self.log_weights)?.0)
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.log_weights)
    }

    pub fn reset_weights(&mut self) {
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
    }

    /// Adds incremental log-weights; returns the log of the weighted mean
    /// increment (the evidence increment).
    pub fn reweight(&mut self, increments: &[f64]) -> Result<f64> {
        let (w, _) = normalize(&self.log_weights)?;
        for (lw, inc) in self.log_weights.iter_mut().zip(increments) {
            *lw += inc;
        }
        let shift = increments
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let mean: f64 = increments
            .iter()
            .zip(&w)
            .map(|(&x, &wi)| wi * (x - shift).exp())
            .sum();
        Ok(shift + mean.ln())
    }
}

/// Max-shifted normalization. Returns the normalized weights and
/// `log Σ exp(log_weights)`. NaN log-weights count as zero weight.
pub fn normalize(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Collapse { step: 0 });
    }
    let mut w: Vec<f64> = log_weights
        .iter()
        .map(|&x| if x.is_nan() { 0.0 } else { (x - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok((w, max + total.ln()))
}

/// `(Σw)² / Σw²` on normalized weights.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let (w, _) = normalize(log_weights)?;
    let sq: f64 = w.iter().map(|x| x * x).sum();
    Ok((1.0 / sq).clamp(1.0, w.len() as f64))
}

/// Offspring indices for systematic resampling with offset `u ∈ [0, 1/N)`
/// and normalized `weights`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let pos = u + i as f64 / n as f64;
        while pos >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

pub fn systematic_resample<R: Rng + ?Sized>(ps: &mut ParticleSystem, rng: &mut R) -> Result<()> {
    let w = ps.weights()?;
    let n = ps.len();
    let u = rng.random::<f64>() / n as f64;
    let idx = systematic_indices(&w, u);
    let old = std::mem::take(&mut ps.particles);
    ps.particles = idx.iter().map(|&i| old[i].clone()).collect();
    ps.reset_weights();
    Ok(())
}

/// Resamples iff `ess < threshold`. Returns `(ess before, resampled)`.
pub fn maybe_resample<R: Rng + ?Sized>(
    ps: &mut ParticleSystem,
    threshold: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let e = ps.ess()?;
    if e < threshold {
        systematic_resample(ps, rng)?;
        Ok((e, true))
    } else {
        Ok((e, false))
    }
}

/// Smallest value whose cumulative weight (sorted by value) reaches `q`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("weighted quantile of no values".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= q {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().unwrap()])
}
