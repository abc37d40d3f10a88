use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::summary::{posterior_intensity_summary, summarize_segment, GridPoint, SegmentSummary};
use super::{RunError, SamplerConfig, SamplerTrace, StepKind, StepRecord};
use crate::error::{Error, Result};
use crate::kernels::{extend_particle, prior_extension, sweep_unchecked, ModelTarget, MoveMix, RngDraws, SweepWindow};
use crate::model::{Hyperparams, MarkedPP, ModelContext, Particle, StaticParams, TargetFlavor, TickData};
use crate::particle::{maybe_resample, ParticleSystem};
use crate::rng::{stream, Purpose, COORDINATOR};

type RunResult = std::result::Result<SamplerTrace, RunError>;

pub(super) struct Engine<'a> {
    cfg: &'a SamplerConfig,
    data: &'a TickData,
    ctx: ModelContext<'a>,
    mix: MoveMix,
    ps: ParticleSystem,
    records: Vec<StepRecord>,
    segments: Vec<SegmentSummary>,
    grid: Vec<GridPoint>,
    log_evidence: f64,
    step: usize,
}

fn draw_static(hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Result<StaticParams> {
    let z: f64 = rng.sample(StandardNormal);
    let mu = hp.alpha_mu + hp.beta_mu.sqrt() * z;
    let gamma = Gamma::new(hp.alpha_sigma, 1.0 / hp.beta_sigma).map_err(|e| Error::Domain(e.to_string()))?;
    loop {
        let sigma = gamma.sample(rng);
        if sigma > 0.0 && sigma.is_finite() {
            return StaticParams::new(mu, sigma);
        }
    }
}

/// Saturated step weight: the likelihood of the ticks in `(a, b]` and the
/// survival over `[a, b]`, at the previous state.
pub(super) fn saturated_increment(ctx: &ModelContext, p: &Particle, a: f64, b: f64) -> f64 {
    ctx.log_lik_interval(p, a, b)
}

/// Tempered data-add weight for tick `i`; `first` adds the survival over
/// `[a, b]`.
pub(super) fn tempered_increment(ctx: &ModelContext, p: &Particle, i: usize, first: Option<(f64, f64)>) -> f64 {
    let mut w = ctx.intensity_at_tick(&p.pp, i).ln() + ctx.cauchy_sum(&p.sp, i, i + 1);
    if let Some((a, b)) = first {
        w -= ctx.integral(&p.pp, a, b);
    }
    w
}

impl<'a> Engine<'a> {
    pub(super) fn new(data: &'a TickData, cfg: &'a SamplerConfig) -> Result<Self> {
        let ctx = ModelContext::new(data, &cfg.hp);
        // Placeholder system; every runner starts with `init`.
        let blank = Particle {
            pp: MarkedPP::empty(0.0),
            sp: StaticParams::new(0.0, 1.0)?,
        };
        Ok(Self {
            cfg,
            data,
            ctx,
            mix: cfg.sweep_mix(),
            ps: ParticleSystem::new(vec![blank; cfg.n_particles])?,
            records: Vec::new(),
            segments: Vec::new(),
            grid: Vec::new(),
            log_evidence: 0.0,
            step: 0,
        })
    }

    fn times(&self) -> &'a [f64] {
        &self.cfg.inference_times
    }

    /// `t_{n-1}` for the 1-based segment `n`, with `t_0 = 0`.
    fn t_prev(&self, n: usize) -> f64 {
        if n == 1 {
            0.0
        } else {
            self.times()[n - 2]
        }
    }

    /// Static parameters from the prior (or the fixed values) and a prior
    /// process on `[0, end]`.
    fn init(&mut self, end: f64) -> Result<()> {
        let cfg = self.cfg;
        self.ps.particles = (0..cfg.n_particles)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, 0, i as u64, Purpose::Init);
                let sp = match cfg.fixed_static {
                    Some(sp) => sp,
                    None => draw_static(&cfg.hp, &mut rng)?,
                };
                let empty = Particle {
                    pp: MarkedPP::empty(0.0),
                    sp,
                };
                if end > 0.0 {
                    prior_extension(&empty, &cfg.hp, 0.0, end, &mut rng)
                } else {
                    Ok(empty)
                }
            })
            .collect::<Result<_>>()?;
        self.ps.reset_weights();
        Ok(())
    }

    /// Propagate and reweight, maybe resample, then sweep.
    fn step<F>(&mut self, segment: usize, kind: StepKind, propagate: F, sweep: Option<(TargetFlavor, SweepWindow)>) -> Result<()>
    where
        F: Fn(&ModelContext, &Particle, &mut ChaCha8Rng) -> Result<(Option<Particle>, f64)> + Sync,
    {
        let started = Instant::now();
        self.step += 1;
        let step = self.step;
        let seed = self.cfg.seed;
        let ctx = &self.ctx;
        let out: Vec<(Option<Particle>, f64)> = self
            .ps
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream(seed, step as u64, i as u64, Purpose::Propagate);
                propagate(ctx, p, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut increments = Vec::with_capacity(out.len());
        for (p, (q, w)) in self.ps.particles.iter_mut().zip(out) {
            if let Some(q) = q {
                *p = q;
            }
            increments.push(w);
        }
        let at_step = |e: Error| match e {
            Error::Collapse { .. } => Error::Collapse { step },
            e => e,
        };
        let ev = self.ps.reweight(&increments).map_err(at_step)?;
        let threshold = self.cfg.threshold_fraction * self.ps.len() as f64;
        let mut rng = stream(seed, step as u64, COORDINATOR, Purpose::Resample);
        let (ess, resampled) = maybe_resample(&mut self.ps, threshold, &mut rng).map_err(at_step)?;
        self.log_evidence += ev;

        if let Some((flavor, win)) = sweep {
            let m = self.cfg.mcmc_iterates;
            if m > 0 {
                let target = ModelTarget::new(&self.ctx, &flavor);
                let mix = &self.mix;
                self.ps.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
                    let mut rng = stream(seed, step as u64, i as u64, Purpose::Sweep);
                    sweep_unchecked(p, &target, mix, &win, m, &mut RngDraws(&mut rng));
                });
            }
        }
        self.ps.step = step;
        self.records.push(StepRecord {
            step,
            segment,
            kind,
            ess,
            resampled,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    fn finish_segment(&mut self, n: usize) -> Result<()> {
        let t = self.times()[n - 1];
        let a = self.t_prev(n);
        let k = self.cfg.points_per_segment;
        let mut points: Vec<f64> = (1..=k).map(|i| a + (t - a) * i as f64 / (k + 1) as f64).collect();
        points.push(t);
        let spans = self.cfg.rate_spans.min(n);
        let span_starts: Vec<f64> = (1..=spans).map(|j| self.t_prev(n + 1 - j)).collect();
        let (summary, filtered) = summarize_segment(&self.ps, &self.cfg.hp, t, &points, &span_starts, self.log_evidence)?;
        self.segments.push(summary);
        self.grid.extend(points.into_iter().zip(filtered).map(|(t, f)| GridPoint {
            t,
            segment: n,
            filtered: f,
            smoothed: None,
        }));
        Ok(())
    }

    fn smooth(&mut self) -> Result<()> {
        let ts: Vec<f64> = self.grid.iter().map(|g| g.t).collect();
        let sm = posterior_intensity_summary(&self.ps, &self.cfg.hp, &ts)?;
        for (g, v) in self.grid.iter_mut().zip(sm) {
            g.smoothed = Some(v);
        }
        Ok(())
    }

    fn into_trace(self) -> SamplerTrace {
        SamplerTrace {
            flavor: self.cfg.flavor,
            rcc: self.cfg.rcc,
            n_particles: self.cfg.n_particles,
            mcmc_iterates: self.cfg.mcmc_iterates,
            seed: self.cfg.seed,
            records: self.records,
            segments: self.segments,
            grid: self.grid,
            log_evidence: self.log_evidence,
            final_system: self.ps,
        }
    }

    fn finish(mut self, outcome: Result<()>) -> RunResult {
        match outcome.and_then(|_| self.smooth()) {
            Ok(()) => Ok(self.into_trace()),
            Err(error) => Err(RunError {
                error,
                partial: Some(Box::new(self.into_trace())),
            }),
        }
    }

    fn window(&self, lo: f64, hi: f64) -> SweepWindow {
        SweepWindow::new(lo, hi, self.mix.window_limit)
    }

    /// Particles live on `[0, t_n]`; each step grows them with the
    /// birth/extend/prior mixture and targets the windowed posterior.
    pub(super) fn run_benchmark(mut self) -> RunResult {
        let outcome = (|| {
            let times = self.times();
            self.init(times[0])?;
            let ext = &self.cfg.extension;
            for n in 1..=times.len() {
                let (t_prev, t_new) = (self.t_prev(n), times[n - 1]);
                let sweep = Some((TargetFlavor::Windowed { t: t_new }, self.window(0.0, t_new)));
                if n == 1 {
                    self.step(n, StepKind::Extension, |ctx, p, _| Ok((None, ctx.log_lik_interval(p, 0.0, t_new))), sweep)?;
                } else {
                    self.step(
                        n,
                        StepKind::Extension,
                        |ctx, p, rng| {
                            let (q, w, _) = extend_particle(p, ctx, ext, t_prev, t_new, rng)?;
                            Ok((Some(q), w))
                        },
                        sweep,
                    )?;
                }
                self.finish_segment(n)?;
            }
            Ok(())
        })();
        self.finish(outcome)
    }

    /// Particles live on `[0, T]` from the start; each step adds the data in
    /// `(t_{n-1}, t_n]`, weighted at the previous state.
    pub(super) fn run_saturated(mut self) -> RunResult {
        let outcome = (|| {
            let times = self.times();
            let horizon = self.cfg.hp.horizon;
            self.init(horizon)?;
            for n in 1..=times.len() {
                let (t_prev, t_new) = (self.t_prev(n), times[n - 1]);
                // RCC moves only the latest jumps before t_n; otherwise the
                // whole process, including its prior-only future part.
                let hi = if self.cfg.rcc { t_new } else { horizon };
                let sweep = Some((TargetFlavor::Saturated { t: t_new }, self.window(0.0, hi)));
                self.step(n, StepKind::DataAdd, |ctx, p, _| Ok((None, saturated_increment(ctx, p, t_prev, t_new))), sweep)?;
                self.finish_segment(n)?;
            }
            Ok(())
        })();
        self.finish(outcome)
    }

    /// Per segment: one prior extension step, then one step per tick.
    ///
    /// The survival term of a segment enters with its first tick; in a
    /// segment without ticks it enters with the extension step, which is
    /// then followed by a sweep.
    pub(super) fn run_tempered(mut self) -> RunResult {
        let outcome = (|| {
            let times = self.times();
            let hp = &self.cfg.hp;
            self.init(0.0)?;
            for n in 1..=times.len() {
                let (t_prev, t_new) = (self.t_prev(n), times[n - 1]);
                let lo = self.data.count_upto(t_prev);
                let hi = self.data.count_upto(t_new);
                let empty = lo == hi;
                let ext_target = TargetFlavor::Tempered {
                    n_data: lo,
                    t_seg: t_new,
                    survival_to: if empty { t_new } else { t_prev },
                };
                let sweep = (self.cfg.sweep_on_extension || empty).then(|| (ext_target, self.window(0.0, t_new)));
                self.step(
                    n,
                    StepKind::Extension,
                    |ctx, p, rng| {
                        let q = prior_extension(p, hp, t_prev, t_new, rng)?;
                        let w = if empty { -ctx.integral(&q.pp, t_prev, t_new) } else { 0.0 };
                        Ok((Some(q), w))
                    },
                    sweep,
                )?;
                for i in lo..hi {
                    let target = TargetFlavor::Tempered {
                        n_data: i + 1,
                        t_seg: t_new,
                        survival_to: t_new,
                    };
                    let sweep = Some((target, self.window(0.0, t_new)));
                    self.step(
                        n,
                        StepKind::DataAdd,
                        |ctx, p, _| Ok((None, tempered_increment(ctx, p, i, (i == lo).then_some((t_prev, t_new))))),
                        sweep,
                    )?;
                }
                self.finish_segment(n)?;
            }
            Ok(())
        })();
        self.finish(outcome)
    }
}
