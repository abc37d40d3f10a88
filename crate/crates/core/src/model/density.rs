use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::{Hyperparams, MarkedPP, StaticParams, TickData};
use crate::error::{Error, Result};

fn check_in_window(pp: &MarkedPP, t: f64, what: &str) -> Result<()> {
    if !(t >= 0.0 && t <= pp.window_end()) {
        return Err(Error::Domain(format!(
            "{what} = {t} outside [0, {}]",
            pp.window_end()
        )));
    }
    Ok(())
}

/// λ(t); jumps at `φ_j <= t` contribute (right-continuous).
pub(crate) fn intensity_unchecked(times: &[f64], marks: &[f64], hp: &Hyperparams, t: f64) -> f64 {
    let n = times.partition_point(|&p| p <= t);
    let mut lambda = hp.lambda0 * (-hp.s * t).exp();
    for (&phi, &zeta) in times[..n].iter().zip(&marks[..n]) {
        lambda += zeta * (-hp.s * (t - phi)).exp();
    }
    lambda
}

/// ∫_a^b λ(u) du in closed form.
pub(crate) fn integrated_unchecked(
    times: &[f64],
    marks: &[f64],
    hp: &Hyperparams,
    a: f64,
    b: f64,
) -> f64 {
    let s = hp.s;
    let mut total = hp.lambda0 * ((-s * a).exp() - (-s * b).exp()) / s;
    let n = times.partition_point(|&p| p < b);
    for (&phi, &zeta) in times[..n].iter().zip(&marks[..n]) {
        let start = a.max(phi);
        total += zeta * ((-s * (start - phi)).exp() - (-s * (b - phi)).exp()) / s;
    }
    total
}

pub fn intensity_at(pp: &MarkedPP, hp: &Hyperparams, t: f64) -> Result<f64> {
    check_in_window(pp, t, "t")?;
    Ok(intensity_unchecked(pp.times(), pp.marks(), hp, t))
}

pub fn integrated_intensity(pp: &MarkedPP, hp: &Hyperparams, a: f64, b: f64) -> Result<f64> {
    if a > b {
        return Err(Error::Domain(format!("interval [{a}, {b}] is reversed")));
    }
    check_in_window(pp, a, "a")?;
    check_in_window(pp, b, "b")?;
    Ok(integrated_unchecked(pp.times(), pp.marks(), hp, a, b))
}

/// λ at each of the increasing times `ts`, in one pass over the jumps.
pub(crate) fn intensity_path_unchecked(pp: &MarkedPP, hp: &Hyperparams, ts: &[f64]) -> Vec<f64> {
    let (times, marks) = (pp.times(), pp.marks());
    let mut out = Vec::with_capacity(ts.len());
    let mut j = 0;
    let mut prev = 0.0;
    let mut lambda = hp.lambda0;
    for &t in ts {
        lambda *= (-hp.s * (t - prev)).exp();
        while j < times.len() && times[j] <= t {
            lambda += marks[j] * (-hp.s * (t - times[j])).exp();
            j += 1;
        }
        prev = t;
        out.push(lambda);
    }
    out
}

/// λ along increasing times within the process window.
pub fn intensity_path(pp: &MarkedPP, hp: &Hyperparams, ts: &[f64]) -> Result<Vec<f64>> {
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("evaluation times must be non-decreasing".into()));
    }
    for &t in ts {
        check_in_window(pp, t, "t")?;
    }
    Ok(intensity_path_unchecked(pp, hp, ts))
}

/// Cauchy(μ, σ) log density.
pub fn log_return_density(xi: f64, sp: &StaticParams) -> f64 {
    let z = (xi - sp.mu) / sp.sigma;
    -(PI * sp.sigma).ln() - z.mul_add(z, 1.0).ln()
}

/// Σ_{ω_i ∈ (a,b]} [log λ(ω_i) + log p(ξ_i)] − ∫_a^b λ.
pub fn log_obs_likelihood(
    pp: &MarkedPP,
    sp: &StaticParams,
    data: &TickData,
    hp: &Hyperparams,
    a: f64,
    b: f64,
) -> Result<f64> {
    if a > b {
        return Err(Error::Domain(format!("interval [{a}, {b}] is reversed")));
    }
    check_in_window(pp, a, "a")?;
    check_in_window(pp, b, "b")?;
    let lo = data.count_upto(a);
    let hi = data.count_upto(b);
    let mut ll = -integrated_unchecked(pp.times(), pp.marks(), hp, a, b);
    for i in lo..hi {
        let w = data.times()[i];
        ll += intensity_unchecked(pp.times(), pp.marks(), hp, w).ln()
            + log_return_density(data.log_returns()[i], sp);
    }
    Ok(ll)
}

/// Log prior of the marked point process on `[0, window]`:
/// Poisson(ν·window) count, uniform ordered times, exponential marks.
pub fn log_pp_prior(pp: &MarkedPP, hp: &Hyperparams, window: f64) -> Result<f64> {
    if pp.window_end() != window {
        return Err(Error::ImpossibleState(format!(
            "process lives on [0, {}] but the prior window is [0, {window}]",
            pp.window_end()
        )));
    }
    if !pp.is_valid() {
        return Err(Error::ImpossibleState(
            "jump times are not ordered inside the window".into(),
        ));
    }
    Ok(log_pp_prior_unchecked(pp.marks(), hp, window))
}

/// Poisson pmf × k!/window^k collapses to exp(-ν·window)·ν^k.
pub(crate) fn log_pp_prior_unchecked(marks: &[f64], hp: &Hyperparams, window: f64) -> f64 {
    let k = marks.len() as f64;
    let mark_sum: f64 = marks.iter().sum();
    -hp.nu * window + k * hp.nu.ln() + k * hp.gamma.ln() - hp.gamma * mark_sum
}

/// Normal(α_μ, β_μ) for μ (β_μ is a variance) plus Gamma(α_σ, rate β_σ) for σ.
pub fn log_static_prior(sp: &StaticParams, hp: &Hyperparams) -> f64 {
    let d = sp.mu - hp.alpha_mu;
    let mu_term = -0.5 * (2.0 * PI * hp.beta_mu).ln() - d * d / (2.0 * hp.beta_mu);
    if sp.sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let sigma_term = hp.alpha_sigma * hp.beta_sigma.ln() - ln_gamma(hp.alpha_sigma)
        + (hp.alpha_sigma - 1.0) * sp.sigma.ln()
        - hp.beta_sigma * sp.sigma;
    mu_term + sigma_term
}
