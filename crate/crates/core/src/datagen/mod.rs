//! Synthetic tick data: a smooth piecewise intensity profile, thinning
//! simulation of the ticks, prior simulation of the latent process, and
//! CSV input/output.

mod csv;

pub use csv::{load_ticks_csv, read_ticks, save_ticks_csv, write_ticks};

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Hyperparams, MarkedPP, StaticParams, TickData};
use crate::rng::{stream, Purpose};

/// Deterministic intensity built from `(breakpoint, level)` knots.
///
/// Between consecutive knots the level follows the cubic Hermite curve with
/// zero end slopes (`3u² - 2u³`), so equal-level knots give a plateau and
/// the curve never overshoots. Outside the knot range the end levels hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityProfile {
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
}

impl IntensityProfile {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let p = Self { breakpoints, levels };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(invalid("profile.breakpoints", "need at least one knot"));
        }
        if self.breakpoints.len() != self.levels.len() {
            return Err(invalid(
                "profile.levels",
                format!("{} levels for {} breakpoints", self.levels.len(), self.breakpoints.len()),
            ));
        }
        if self.breakpoints.iter().any(|b| !(b.is_finite() && *b >= 0.0))
            || self.breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("profile.breakpoints", "must be >= 0 and strictly increasing"));
        }
        if self.levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("profile.levels", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        let i = b.partition_point(|&x| x <= t);
        if i == 0 {
            return self.levels[0];
        }
        if i == b.len() {
            return self.levels[b.len() - 1];
        }
        let (l0, l1) = (self.levels[i - 1], self.levels[i]);
        let u = (t - b[i - 1]) / (b[i] - b[i - 1]);
        l0 + (l1 - l0) * u * u * (3.0 - 2.0 * u)
    }

    /// `∫_0^t` of the profile. The Hermite ramp integrates to the mean of its
    /// end levels.
    pub fn integral(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        let mut total = self.levels[0] * t.min(b[0]).max(0.0);
        for i in 1..b.len() {
            if t <= b[i - 1] {
                return total;
            }
            let (l0, l1) = (self.levels[i - 1], self.levels[i]);
            if t >= b[i] {
                total += 0.5 * (l0 + l1) * (b[i] - b[i - 1]);
            } else {
                let h = b[i] - b[i - 1];
                let u = (t - b[i - 1]) / h;
                // ∫_0^u 3v² - 2v³ dv = u³ - u⁴/2
                total += h * (l0 * u + (l1 - l0) * (u * u * u - 0.5 * u * u * u * u));
                return total;
            }
        }
        total + self.levels[b.len() - 1] * (t - b[b.len() - 1]).max(0.0)
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            levels: self.levels.iter().map(|l| l * factor).collect(),
        }
    }
}

/// Plateaus at 6000 on [0.05, 0.18], 2000 on [0.28, 0.42], 4000 on
/// [0.51, 0.68] and 2000 on [0.78, 0.90], joined by smooth ramps. The curve
/// starts at 2000 at t = 0 and ramps up to the first plateau.
pub fn plateau_profile() -> IntensityProfile {
    IntensityProfile {
        breakpoints: vec![0.0, 0.05, 0.18, 0.28, 0.42, 0.51, 0.68, 0.78, 0.90],
        levels: vec![2000.0, 6000.0, 6000.0, 2000.0, 2000.0, 4000.0, 4000.0, 2000.0, 2000.0],
    }
}

/// Ticks on `(0, horizon)` by thinning a Poisson process of rate
/// `profile.max_level()`, with i.i.d. Cauchy(μ, σ) log-returns.
pub fn simulate_ticks(profile: &IntensityProfile, sp: &StaticParams, horizon: f64, seed: u64) -> Result<TickData> {
    profile.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon", "must be > 0"));
    }
    let mut rng = stream(seed, 0, 0, Purpose::Data);
    let top = profile.max_level();
    let mut times = Vec::new();
    if top > 0.0 {
        let gap = Exp::new(top).map_err(|e| Error::Domain(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= horizon {
                break;
            }
            if rng.random::<f64>() * top < profile.at(t) && t > times.last().copied().unwrap_or(0.0) {
                times.push(t);
            }
        }
    }
    let returns = Cauchy::new(sp.mu, sp.sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = stream(seed, 0, 1, Purpose::Data);
    let xi = times.iter().map(|_| returns.sample(&mut rng)).collect();
    TickData::new(times, xi)
}

/// A draw of the latent process on `[0, hp.horizon]` from its prior.
pub fn simulate_latent(hp: &Hyperparams, seed: u64) -> Result<MarkedPP> {
    hp.validate()?;
    let mut rng = stream(seed, 0, 2, Purpose::Data);
    let count = Poisson::new(hp.nu * hp.horizon)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(&mut rng) as usize;
    let mut times: Vec<f64> = Vec::with_capacity(count);
    while times.len() < count {
        let t = rng.random::<f64>() * hp.horizon;
        if t > 0.0 {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let marks = Exp::new(hp.gamma).map_err(|e| Error::Domain(e.to_string()))?;
    let m = times.iter().map(|_| marks.sample(&mut rng).max(f64::MIN_POSITIVE)).collect();
    MarkedPP::new(times, m, hp.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::intensity_at;

    fn sp() -> StaticParams {
        StaticParams::new(0.0, 2.5e-4).unwrap()
    }

    #[test]
    fn plateau_values() {
        let p = plateau_profile();
        assert_eq!(p.at(0.10), 6000.0);
        assert_eq!(p.at(0.60), 4000.0);
        assert_eq!(p.at(0.35), 2000.0);
        assert_eq!(p.at(0.85), 2000.0);
        assert_eq!(p.at(0.0), 2000.0);
        let mid = p.at(0.23);
        assert!(mid > 2000.0 && mid < 6000.0);
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let v = p.at(0.18 + 0.1 * i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn profile_integral_matches_quadrature() {
        let p = plateau_profile();
        for &t in &[0.0, 0.03, 0.05, 0.1, 0.23, 0.3, 0.77, 0.9, 1.0] {
            let n = 200_000;
            let h = t / n as f64;
            let q: f64 = (0..n).map(|i| p.at((i as f64 + 0.5) * h)).sum::<f64>() * h;
            assert!((p.integral(t) - q).abs() < 1e-6 * q.max(1.0), "{t}");
        }
        assert!((p.integral(0.9) - 3150.0).abs() < 1e-9);
    }

    #[test]
    fn tick_count_band() {
        let p = plateau_profile();
        let band = 3.0 * 3206f64.sqrt();
        let inside = (1..=20)
            .filter(|&seed| {
                let n = simulate_ticks(&p, &sp(), 0.9, seed).unwrap().len() as f64;
                (n - 3206.0).abs() <= band
            })
            .count();
        assert!(inside >= 18, "{inside}/20 within the band");
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = plateau_profile();
        assert_eq!(simulate_ticks(&p, &sp(), 0.9, 4).unwrap(), simulate_ticks(&p, &sp(), 0.9, 4).unwrap());
        assert_ne!(simulate_ticks(&p, &sp(), 0.9, 4).unwrap(), simulate_ticks(&p, &sp(), 0.9, 5).unwrap());
    }

    #[test]
    fn zero_profile_gives_no_ticks_there() {
        let p = IntensityProfile::new(vec![0.0, 0.1, 0.2, 0.3], vec![1000.0, 0.0, 0.0, 1000.0]).unwrap();
        for seed in 0..20 {
            let d = simulate_ticks(&p, &sp(), 0.4, seed).unwrap();
            assert_eq!(d.count_in(0.1, 0.2), 0);
        }
        let d = simulate_ticks(&plateau_profile().scaled(0.0), &sp(), 0.9, 1).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn plateau_rates_within_three_se() {
        let p = plateau_profile();
        let plateaus = [(0.05, 0.18, 6000.0), (0.28, 0.42, 2000.0), (0.51, 0.68, 4000.0), (0.78, 0.90, 2000.0)];
        let reps = 100;
        let mut counts = [0usize; 4];
        for seed in 0..reps {
            let d = simulate_ticks(&p, &sp(), 0.9, 1000 + seed).unwrap();
            for (c, &(a, b, _)) in counts.iter_mut().zip(&plateaus) {
                *c += d.count_in(a, b);
            }
        }
        for (c, &(a, b, level)) in counts.iter().zip(&plateaus) {
            let mean = level * (b - a) * reps as f64;
            assert!((*c as f64 - mean).abs() < 3.0 * mean.sqrt(), "{a}-{b}: {c} vs {mean}");
        }
    }

    #[test]
    fn constant_profile_gaps_are_exponential() {
        let level = 1000.0;
        let p = IntensityProfile::new(vec![0.0], vec![level]).unwrap();
        let mut gaps = Vec::new();
        let mut seed = 0;
        while gaps.len() < 10_000 {
            let d = simulate_ticks(&p, &sp(), 1.0, seed).unwrap();
            gaps.extend(d.times().windows(2).map(|w| w[1] - w[0]));
            seed += 1;
        }
        gaps.truncate(10_000);
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let d = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let f = 1.0 - (-level * g).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov–Smirnov critical value at the 0.1% level.
        assert!(d < 1.949 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn latent_prior_moments() {
        let hp = Hyperparams::default();
        let reps = 10_000;
        let mut counts = Vec::with_capacity(reps);
        let mut marks = Vec::new();
        for seed in 0..reps as u64 {
            let pp = simulate_latent(&hp, seed).unwrap();
            assert!(pp.is_valid());
            counts.push(pp.len() as f64);
            marks.extend_from_slice(pp.marks());
        }
        let mean_k = counts.iter().sum::<f64>() / reps as f64;
        let se_k = (hp.nu * hp.horizon / reps as f64).sqrt();
        assert!((mean_k - hp.nu * hp.horizon).abs() < 3.0 * se_k);
        let m = marks.len() as f64;
        let mean_m = marks.iter().sum::<f64>() / m;
        assert!((mean_m - 1.0 / hp.gamma).abs() < 3.0 * (1.0 / hp.gamma) / m.sqrt());

        let rare = Hyperparams { nu: 0.01, ..hp.clone() };
        let p0 = (-rare.nu * rare.horizon).exp();
        assert!(p0 >= 0.99);
        let n = 10_000;
        let empty = (0..n).filter(|&s| simulate_latent(&rare, s).unwrap().is_empty()).count() as f64 / n as f64;
        assert!((empty - p0).abs() < 3.0 * (p0 * (1.0 - p0) / n as f64).sqrt(), "{empty} vs {p0}");
    }

    #[test]
    fn latent_intensity_approaches_stationary_mean() {
        let hp = Hyperparams { horizon: 2.0, lambda0: 1.0, ..Hyperparams::default() };
        let reps = 4000;
        let vals: Vec<f64> = (0..reps)
            .map(|s| intensity_at(&simulate_latent(&hp, s).unwrap(), &hp, 2.0).unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        assert!((mean - hp.stationary_intensity()).abs() < 3.0 * (var / reps as f64).sqrt());
    }
}
