use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmfilter::sample_sd as sd;
use crate::error::{invalid, Result};
use crate::kernels::{prior_extension, sweep_unchecked, ModelTarget, MoveMix, RngDraws, SweepWindow};
use crate::model::{integrated_intensity, Hyperparams, MarkedPP, ModelContext, Particle, StaticParams, TargetFlavor, TickData};
use crate::particle::{maybe_resample, ParticleSystem};
use crate::rng::{stream, Purpose, COORDINATOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceProbeConfig {
    /// Numbers of ticks `r` at which the estimate is read off, increasing.
    pub data_sizes: Vec<usize>,
    pub repetitions: usize,
    pub n_particles: usize,
    pub mcmc_iterates: usize,
    pub seed: u64,
    /// The process lives on `[0, hp.horizon]`.
    pub hp: Hyperparams,
    /// Held fixed.
    pub sp: StaticParams,
    pub moves: MoveMix,
    pub bootstrap: usize,
}

impl VarianceProbeConfig {
    pub fn new(data_sizes: Vec<usize>, repetitions: usize, n_particles: usize, seed: u64, hp: Hyperparams, sp: StaticParams) -> Self {
        Self {
            data_sizes,
            repetitions,
            n_particles,
            mcmc_iterates: 1,
            seed,
            hp,
            sp,
            moves: MoveMix::default(),
            bootstrap: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub r: usize,
    pub mean: f64,
    /// Standard deviation of the estimate across repetitions.
    pub dispersion: f64,
    /// Bootstrap standard error of `dispersion`.
    pub dispersion_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
    /// Least-squares slope of dispersion against `r`.
    pub slope: f64,
    /// Least-squares slope of log dispersion against log `r` over `r >= 1`;
    /// `None` with fewer than two such sizes.
    pub log_log_slope: Option<f64>,
}

impl VarianceTable {
    /// CSV with columns `r,mean,dispersion,dispersion_se`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,mean,dispersion,dispersion_se")?;
        for row in &self.rows {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e}", row.r, row.mean, row.dispersion, row.dispersion_se)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Bounded test functional: `m / (m + c)` with `m` the mean intensity over
/// the window and `c` the stationary mean intensity.
fn functional(p: &Particle, hp: &Hyperparams) -> f64 {
    let m = integrated_intensity(&p.pp, hp, 0.0, hp.horizon).unwrap_or(f64::NAN) / hp.horizon;
    m / (m + hp.stationary_intensity())
}

/// One data-point tempered run on the fixed window `[0, T]`. Tick `i` brings
/// `λ(ω_i) f(ξ_i) exp(-∫_0^T λ / R)`, so after `r` ticks the target is the
/// prior times `r` of these `R` factors. Returns the estimate at each size.
fn tempered_run(data: &TickData, cfg: &VarianceProbeConfig, seed: u64) -> Result<Vec<f64>> {
    let hp = &cfg.hp;
    let ctx = ModelContext::new(data, hp);
    let total = data.count_upto(hp.horizon);
    let mix = cfg.moves.without_static();
    let win = SweepWindow::new(0.0, hp.horizon, None);
    let particles = (0..cfg.n_particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, 0, i as u64, Purpose::Init);
            let empty = Particle {
                pp: MarkedPP::empty(0.0),
                sp: cfg.sp,
            };
            prior_extension(&empty, hp, 0.0, hp.horizon, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ps = ParticleSystem::new(particles)?;
    let estimate = |ps: &ParticleSystem| -> Result<f64> {
        let w = ps.weights()?;
        Ok(ps.particles.iter().zip(w).map(|(p, w)| w * functional(p, hp)).sum())
    };
    let mut out = Vec::with_capacity(cfg.data_sizes.len());
    let mut next = 0;
    for r in 0..=total {
        while next < cfg.data_sizes.len() && cfg.data_sizes[next] == r {
            out.push(estimate(&ps)?);
            next += 1;
        }
        if next == cfg.data_sizes.len() || r == total {
            break;
        }
        let step = r as u64 + 1;
        let inc: Vec<f64> = ps
            .particles
            .par_iter()
            .map(|p| {
                ctx.intensity_at_tick(&p.pp, r).ln() + ctx.cauchy_sum(&p.sp, r, r + 1)
                    - ctx.integral(&p.pp, 0.0, hp.horizon) / total as f64
            })
            .collect();
        ps.reweight(&inc)?;
        let mut rng = stream(seed, step, COORDINATOR, Purpose::Resample);
        maybe_resample(&mut ps, 0.5 * cfg.n_particles as f64, &mut rng)?;
        if cfg.mcmc_iterates > 0 {
            let flavor = TargetFlavor::Tempered {
                n_data: r + 1,
                t_seg: hp.horizon,
                survival_to: hp.horizon,
            };
            let target = ModelTarget::new(&ctx, &flavor).with_survival_scale((r + 1) as f64 / total as f64);
            ps.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
                let mut rng = stream(seed, step, i as u64, Purpose::Sweep);
                sweep_unchecked(p, &target, &mix, &win, cfg.mcmc_iterates, &mut RngDraws(&mut rng));
            });
        }
    }
    Ok(out)
}

/// Spread across repetitions of the tempered estimate of a bounded
/// functional after `r` ticks, for each `r` in `cfg.data_sizes`.
pub fn variance_growth_probe(data: &TickData, cfg: &VarianceProbeConfig) -> Result<VarianceTable> {
    cfg.hp.validate()?;
    cfg.moves.validate()?;
    let total = data.count_upto(cfg.hp.horizon);
    if cfg.data_sizes.is_empty() || cfg.data_sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("data_sizes", "need increasing sizes"));
    }
    if cfg.data_sizes[cfg.data_sizes.len() - 1] > total {
        return Err(invalid("data_sizes", format!("only {total} ticks lie in the window")));
    }
    if cfg.repetitions == 0 || cfg.n_particles < 2 {
        return Err(invalid("repetitions", "need repetitions >= 1 and n_particles >= 2"));
    }
    let runs: Vec<Vec<f64>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|k| {
            let seed: u64 = stream(cfg.seed, 0, k as u64, Purpose::Probe).random();
            tempered_run(data, cfg, seed)
        })
        .collect::<Result<_>>()?;
    let mut rng = stream(cfg.seed, 1, COORDINATOR, Purpose::Probe);
    let rows: Vec<VarianceRow> = cfg
        .data_sizes
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let xs: Vec<f64> = runs.iter().map(|run| run[j]).collect();
            let boot: Vec<f64> = (0..cfg.bootstrap)
                .map(|_| {
                    let s: Vec<f64> = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect();
                    sd(&s)
                })
                .collect();
            VarianceRow {
                r,
                mean: xs.iter().sum::<f64>() / xs.len() as f64,
                dispersion: sd(&xs),
                dispersion_se: sd(&boot),
            }
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| r.r as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.dispersion).collect();
    let positive: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.r >= 1 && r.dispersion > 0.0)
        .map(|r| ((r.r as f64).ln(), r.dispersion.ln()))
        .collect();
    let log_log_slope = (positive.len() >= 2).then(|| {
        let (lx, ly): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        ols_slope(&lx, &ly)
    });
    Ok(VarianceTable {
        slope: ols_slope(&x, &y),
        rows,
        log_log_slope,
    })
}
