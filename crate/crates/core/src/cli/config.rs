//! TOML run configuration. Every table rejects unknown keys.
//!
//! ```toml
//! seed = 1
//!
//! [data]            # generate
//! horizon = 0.9
//! mu = 0.0
//! sigma = 2.5e-4
//! scale = 1.0       # multiplies the profile levels
//!
//! [sampler]         # run
//! flavor = "tempered"
//! rcc = false
//! n_particles = 1000
//! mcmc_iterates = 5
//!
//! [grid]            # inference times start, start + step, ... <= stop
//! step = 0.003
//!
//! [hp]              # model hyperparameters, e.g. nu = 150.0
//! [kernels]         # MCMC move mix and scales
//! [extension]       # benchmark extension mixture
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{plateau_profile, IntensityProfile};
use crate::error::{Error, Result};
use crate::kernels::{ExtensionMix, MoveMix};
use crate::model::{Hyperparams, StaticParams};
use crate::samplers::{Flavor, SamplerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataSection,
    pub sampler: SamplerSection,
    pub grid: GridSection,
    pub hp: Hyperparams,
    pub kernels: MoveMix,
    pub extension: ExtensionMix,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            data: DataSection::default(),
            sampler: SamplerSection::default(),
            grid: GridSection::default(),
            hp: Hyperparams::default(),
            kernels: MoveMix::default(),
            extension: ExtensionMix::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub horizon: f64,
    pub mu: f64,
    pub sigma: f64,
    pub scale: f64,
    /// Defaults to the built-in four-plateau profile.
    pub profile: Option<IntensityProfile>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            horizon: 0.9,
            mu: 0.0,
            sigma: 2.5e-4,
            scale: 1.0,
            profile: None,
        }
    }
}

impl DataSection {
    pub fn profile(&self) -> Result<IntensityProfile> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::Config(format!("data.scale: must be >= 0, got {}", self.scale)));
        }
        let p = self.profile.clone().unwrap_or_else(plateau_profile).scaled(self.scale);
        p.validate().map_err(|e| Error::Config(format!("data.profile: {e}")))?;
        Ok(p)
    }

    pub fn static_params(&self) -> Result<StaticParams> {
        StaticParams::new(self.mu, self.sigma).map_err(|e| Error::Config(format!("data: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub flavor: Flavor,
    pub rcc: bool,
    pub n_particles: usize,
    pub mcmc_iterates: usize,
    pub threshold_fraction: f64,
    pub rcc_window: usize,
    pub sweep_on_extension: bool,
    pub fixed_static: Option<StaticParams>,
    pub points_per_segment: usize,
    pub rate_spans: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let base = SamplerConfig::new(Flavor::Tempered, 1000, 5, vec![], 1);
        Self {
            flavor: base.flavor,
            rcc: base.rcc,
            n_particles: base.n_particles,
            mcmc_iterates: base.mcmc_iterates,
            threshold_fraction: base.threshold_fraction,
            rcc_window: base.rcc_window,
            sweep_on_extension: base.sweep_on_extension,
            fixed_static: base.fixed_static,
            points_per_segment: base.points_per_segment,
            rate_spans: base.rate_spans,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// First inference time; defaults to `step`.
    pub start: Option<f64>,
    /// Last inference time at most this; defaults to `hp.horizon`.
    pub stop: Option<f64>,
    pub step: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            start: None,
            stop: None,
            step: 0.003,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn inference_times(&self) -> Result<Vec<f64>> {
        let g = &self.grid;
        let start = g.start.unwrap_or(g.step);
        let stop = g.stop.unwrap_or(self.hp.horizon);
        if !(g.step.is_finite() && g.step > 0.0 && start > 0.0 && stop >= start) {
            return Err(Error::Config(format!(
                "grid: need step > 0 and 0 < start <= stop, got start {start}, stop {stop}, step {}",
                g.step
            )));
        }
        let n = ((stop - start) / g.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| start + i as f64 * g.step).collect())
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let mut cfg = SamplerConfig::new(s.flavor, s.n_particles, s.mcmc_iterates, self.inference_times()?, self.seed);
        cfg.rcc = s.rcc;
        cfg.threshold_fraction = s.threshold_fraction;
        cfg.hp = self.hp.clone();
        cfg.moves = self.kernels.clone();
        cfg.extension = self.extension.clone();
        cfg.rcc_window = s.rcc_window;
        cfg.sweep_on_extension = s.sweep_on_extension;
        cfg.fixed_static = s.fixed_static;
        cfg.points_per_segment = s.points_per_segment;
        cfg.rate_spans = s.rate_spans;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}
