use super::density::{integrated_unchecked, intensity_unchecked, log_pp_prior_unchecked};
use super::{log_return_density, log_static_prior, Hyperparams, Particle, TickData};
use crate::error::{Error, Result};

/// Which posterior a sampler step targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetFlavor {
    /// Process on `[0, t]`, ticks `<= t`, survival over `[0, t]`.
    Windowed { t: f64 },
    /// Process on `[0, T]`, ticks `<= t`, survival over `[0, t]`.
    Saturated { t: f64 },
    /// Process on `[0, t_seg]`, the first `n_data` ticks, survival over
    /// `[0, survival_to]`.
    Tempered {
        n_data: usize,
        t_seg: f64,
        survival_to: f64,
    },
}

impl TargetFlavor {
    pub fn window_end(&self, hp: &Hyperparams) -> f64 {
        match *self {
            TargetFlavor::Windowed { t } => t,
            TargetFlavor::Saturated { .. } => hp.horizon,
            TargetFlavor::Tempered { t_seg, .. } => t_seg,
        }
    }

    pub fn lik_end(&self) -> f64 {
        match *self {
            TargetFlavor::Windowed { t } | TargetFlavor::Saturated { t } => t,
            TargetFlavor::Tempered { survival_to, .. } => survival_to,
        }
    }

    pub fn n_ticks(&self, data: &TickData) -> usize {
        match *self {
            TargetFlavor::Windowed { t } | TargetFlavor::Saturated { t } => data.count_upto(t),
            TargetFlavor::Tempered { n_data, .. } => n_data.min(data.len()),
        }
    }

    pub fn validate(&self, data: &TickData, hp: &Hyperparams) -> Result<()> {
        let end = self.window_end(hp);
        let lik = self.lik_end();
        if !(lik >= 0.0 && lik <= end) {
            return Err(Error::Domain(format!(
                "likelihood end {lik} outside process window [0, {end}]"
            )));
        }
        if let TargetFlavor::Tempered { n_data, .. } = *self {
            if n_data > data.count_upto(end) {
                return Err(Error::Domain(format!(
                    "{n_data} ticks requested but only {} lie in [0, {end}]",
                    data.count_upto(end)
                )));
            }
        }
        Ok(())
    }
}

/// Unnormalized log posterior of a particle. Reference implementation;
/// samplers use [`super::ModelContext`].
pub fn log_target(p: &Particle, data: &TickData, hp: &Hyperparams, flavor: &TargetFlavor) -> Result<f64> {
    flavor.validate(data, hp)?;
    let end = flavor.window_end(hp);
    if p.pp.window_end() != end {
        return Err(Error::ImpossibleState(format!(
            "process lives on [0, {}] but the target needs [0, {end}]",
            p.pp.window_end()
        )));
    }
    let (times, marks) = (p.pp.times(), p.pp.marks());
    let n = flavor.n_ticks(data);
    let mut ll = -integrated_unchecked(times, marks, hp, 0.0, flavor.lik_end());
    for i in 0..n {
        ll += intensity_unchecked(times, marks, hp, data.times()[i]).ln()
            + log_return_density(data.log_returns()[i], &p.sp);
    }
    Ok(ll + log_pp_prior_unchecked(marks, hp, end) + log_static_prior(&p.sp, hp))
}
