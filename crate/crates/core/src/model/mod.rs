//! The shot-noise Cox model.
//!
//! Latent intensity
//!
//! ```text
//! λ(t) = λ0·exp(-s·t) + Σ_{φ_j ≤ t} ζ_j·exp(-s·(t - φ_j))
//! ```
//!
//! driven by a compound Poisson process with arrival rate `nu` and
//! exponential marks of mean `1/gamma`. Observed ticks are a Cox process
//! with intensity λ, each carrying a Cauchy(μ, σ) log-return.
//!
//! The count/mark prior reads `k ~ Poisson(nu·window)` and
//! `ζ ~ Exponential(mean = 1/gamma)`. With `gamma = 0.001, nu = 150, s = 20`
//! this gives a stationary mean intensity `nu/(gamma·s) = 7500`, the only
//! reading consistent with synthetic levels of a few thousand.

mod context;
mod density;
mod target;

pub use context::{JumpChange, ModelContext};
pub use density::{
    integrated_intensity, intensity_at, intensity_path, log_obs_likelihood, log_pp_prior, log_return_density,
    log_static_prior,
};
pub use target::{log_target, TargetFlavor};
pub(crate) use density::{integrated_unchecked, intensity_path_unchecked, log_pp_prior_unchecked};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Model constants and prior hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Mark-scale parameter; marks have mean `1/gamma`.
    pub gamma: f64,
    /// Latent jump arrival rate per unit time.
    pub nu: f64,
    /// Exponential decay rate of the intensity.
    pub s: f64,
    /// Intensity at time zero.
    pub lambda0: f64,
    /// Normal prior mean for μ.
    pub alpha_mu: f64,
    /// Normal prior variance for μ.
    pub beta_mu: f64,
    /// Gamma prior shape for σ.
    pub alpha_sigma: f64,
    /// Gamma prior rate for σ.
    pub beta_sigma: f64,
    /// Observation horizon `T` (fraction of a day).
    pub horizon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.001,
            nu: 150.0,
            s: 20.0,
            lambda0: 4000.0,
            alpha_mu: 0.0,
            beta_mu: 1e-6,
            alpha_sigma: 1.0,
            beta_sigma: 1000.0,
            horizon: 0.9,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("nu", self.nu),
            ("s", self.s),
            ("lambda0", self.lambda0),
            ("beta_mu", self.beta_mu),
            ("alpha_sigma", self.alpha_sigma),
            ("beta_sigma", self.beta_sigma),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !self.alpha_mu.is_finite() {
            return Err(invalid("alpha_mu", "must be finite"));
        }
        Ok(())
    }

    pub fn mark_mean(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Log density of the exponential mark prior at `mark`.
    pub fn log_mark_density(&self, mark: f64) -> f64 {
        if mark <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.gamma.ln() - self.gamma * mark
    }

    /// Long-run mean of the prior intensity process.
    pub fn stationary_intensity(&self) -> f64 {
        self.nu / (self.gamma * self.s)
    }
}

/// Latent marked point process on `[0, window_end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedPP {
    times: Vec<f64>,
    marks: Vec<f64>,
    window_end: f64,
}

impl MarkedPP {
    pub fn new(times: Vec<f64>, marks: Vec<f64>, window_end: f64) -> Result<Self> {
        if !(window_end.is_finite() && window_end > 0.0) {
            return Err(invalid("window_end", format!("must be > 0, got {window_end}")));
        }
        if times.len() != marks.len() {
            return Err(invalid(
                "marks",
                format!("{} marks for {} jump times", marks.len(), times.len()),
            ));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t > prev && t < window_end) {
                return Err(invalid(
                    "jump_times",
                    format!("jump {i} at {t} breaks strict ordering inside (0, {window_end})"),
                ));
            }
            prev = t;
        }
        if let Some(m) = marks.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(invalid("marks", format!("mark {m} is not positive")));
        }
        Ok(Self {
            times,
            marks,
            window_end,
        })
    }

    pub fn empty(window_end: f64) -> Self {
        Self {
            times: Vec::new(),
            marks: Vec::new(),
            window_end,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }

    /// Number of jumps strictly before `t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&p| p < t)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Enlarge the window. Jumps are unchanged.
    pub fn extend_window(&mut self, new_end: f64) -> Result<()> {
        if new_end < self.window_end {
            return Err(Error::Domain(format!(
                "cannot shrink window from {} to {new_end}",
                self.window_end
            )));
        }
        self.window_end = new_end;
        Ok(())
    }

    /// Inserts a jump keeping the order; returns its index, or `None` if the
    /// time is outside the window or collides with an existing jump.
    pub(crate) fn insert(&mut self, time: f64, mark: f64) -> Option<usize> {
        if !(time > 0.0 && time < self.window_end) {
            return None;
        }
        let idx = self.times.partition_point(|&p| p < time);
        if self.times.get(idx) == Some(&time) {
            return None;
        }
        self.times.insert(idx, time);
        self.marks.insert(idx, mark);
        Some(idx)
    }

    pub(crate) fn remove(&mut self, idx: usize) -> (f64, f64) {
        (self.times.remove(idx), self.marks.remove(idx))
    }

    pub(crate) fn set_time(&mut self, idx: usize, time: f64) {
        self.times[idx] = time;
    }

    pub(crate) fn set_mark(&mut self, idx: usize, mark: f64) {
        self.marks[idx] = mark;
    }

    /// Appends a jump after all existing ones. Caller guarantees ordering.
    pub(crate) fn push_unchecked(&mut self, time: f64, mark: f64) {
        debug_assert!(self.times.last().is_none_or(|&p| p < time));
        self.times.push(time);
        self.marks.push(mark);
    }

    pub(crate) fn set_window_end_unchecked(&mut self, end: f64) {
        self.window_end = end;
    }

    /// Checks every structural invariant.
    pub fn is_valid(&self) -> bool {
        Self::new(self.times.clone(), self.marks.clone(), self.window_end).is_ok()
    }
}

/// Location and scale of the Cauchy return distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticParams {
    pub mu: f64,
    pub sigma: f64,
}

impl StaticParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }
}

/// Observed ticks: strictly increasing times with their log-returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickData {
    times: Vec<f64>,
    log_returns: Vec<f64>,
}

impl TickData {
    pub fn new(times: Vec<f64>, log_returns: Vec<f64>) -> Result<Self> {
        if times.len() != log_returns.len() {
            return Err(invalid(
                "log_returns",
                format!("{} returns for {} ticks", log_returns.len(), times.len()),
            ));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t > prev) {
                return Err(invalid(
                    "tick_times",
                    format!("tick {i} at {t} is not strictly after {prev}"),
                ));
            }
            prev = t;
        }
        if log_returns.iter().any(|x| !x.is_finite()) {
            return Err(invalid("log_returns", "non-finite value"));
        }
        Ok(Self { times, log_returns })
    }

    pub fn empty() -> Self {
        Self {
            times: Vec::new(),
            log_returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_returns(&self) -> &[f64] {
        &self.log_returns
    }

    /// Number of ticks with time `<= t`.
    pub fn count_upto(&self, t: f64) -> usize {
        self.times.partition_point(|&w| w <= t)
    }

    /// Number of ticks in `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.count_upto(b).saturating_sub(self.count_upto(a))
    }

    /// Ticks with time `<= t`, as a new data set.
    pub fn truncated(&self, t: f64) -> TickData {
        let n = self.count_upto(t);
        TickData {
            times: self.times[..n].to_vec(),
            log_returns: self.log_returns[..n].to_vec(),
        }
    }
}

/// One particle: a latent process together with the static parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pp: MarkedPP,
    pub sp: StaticParams,
}
