//! Sequential MCMC filter with an empirical bank of stored states.
//!
//! At the first inference time one RJMCMC chain targets the windowed
//! posterior. Afterwards the previous marginal is replaced by the uniform
//! measure on the `N` stored states, and a chain over (bank atom, new
//! segment) targets
//! `l_(t_{n-1}, t_n](x) · p(new segment) · S^N(atom)`.

mod probe;

pub(crate) use probe::sample_sd;
pub use probe::{error_growth_probe, ProbeRow, ProbeTable};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{prior_extension, sweep_unchecked, Draws, ModelTarget, MoveMix, RngDraws, SweepTarget, SweepWindow};
use crate::model::{Hyperparams, MarkedPP, ModelContext, Particle, StaticParams, TargetFlavor, TickData};
use crate::particle::ParticleSystem;
use crate::rng::{stream, Purpose};
use crate::samplers::{summarize_segment, GridPoint, SegmentSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmConfig {
    /// Chain states kept per inference time (`N`).
    pub n_states: usize,
    pub inference_times: Vec<f64>,
    pub hp: Hyperparams,
    /// Known (μ, σ).
    pub sp: StaticParams,
    pub seed: u64,
    /// Chain iterations discarded before storing.
    pub burn_in: usize,
    /// Jump moves of one iteration; static moves are always off.
    pub moves: MoveMix,
    pub points_per_segment: usize,
    /// Keep every bank, not just the last.
    pub keep_banks: bool,
}

impl CmConfig {
    pub fn new(n_states: usize, inference_times: Vec<f64>, sp: StaticParams, seed: u64) -> Self {
        Self {
            n_states,
            inference_times,
            hp: Hyperparams::default(),
            sp,
            seed,
            burn_in: 0,
            moves: MoveMix::default(),
            points_per_segment: 10,
            keep_banks: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.moves.validate()?;
        if self.n_states == 0 {
            return Err(invalid("n_states", "need at least one stored state"));
        }
        let t = &self.inference_times;
        if t.is_empty() || !(t[0] > 0.0) || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("inference_times", "need increasing times > 0"));
        }
        Ok(())
    }
}

/// The `N` states stored at one inference time, each on `[0, t]`, all of
/// weight `1/N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBank {
    pub t: f64,
    pub states: Vec<Particle>,
}

impl EmpiricalBank {
    pub fn new(t: f64, states: Vec<Particle>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("empirical bank has no states".into()));
        }
        if let Some(p) = states.iter().find(|p| p.pp.window_end() != t || !p.pp.is_valid()) {
            return Err(Error::ImpossibleState(format!(
                "bank state lives on [0, {}], expected [0, {t}]",
                p.pp.window_end()
            )));
        }
        Ok(Self { t, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn as_system(&self) -> Result<ParticleSystem> {
        ParticleSystem::new(self.states.clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CmTrace {
    pub segments: Vec<SegmentSummary>,
    pub grid: Vec<GridPoint>,
    /// Acceptance rate of the atom re-selection move per inference time
    /// (`None` at the first).
    pub atom_acceptance: Vec<Option<f64>>,
    pub banks: Vec<EmpiricalBank>,
    pub final_bank: EmpiricalBank,
}

/// Chain state for `n >= 2`: a bank atom plus the process on the new
/// segment, stored as one process on `[0, t_n]`.
#[derive(Clone, Debug)]
pub(crate) struct BankState {
    pub atom: usize,
    pub p: Particle,
}

/// The history of `atom` followed by the jumps of `p` after `t_prev`.
fn splice(atom: &Particle, p: &Particle, t_prev: f64) -> Particle {
    let k = p.pp.times().partition_point(|&t| t <= t_prev);
    let mut times = atom.pp.times().to_vec();
    let mut marks = atom.pp.marks().to_vec();
    times.extend_from_slice(&p.pp.times()[k..]);
    marks.extend_from_slice(&p.pp.marks()[k..]);
    Particle {
        pp: MarkedPP::new(times, marks, p.pp.window_end()).expect("bank history ends before the new segment"),
        sp: p.sp,
    }
}

/// One iteration for `n >= 2`: an independence proposal of a new bank atom,
/// then a sweep of the jumps in `(t_prev, t_new)` with the history fixed.
pub(crate) fn bank_iteration<T, D>(
    s: &mut BankState,
    bank: &[Particle],
    ctx: &ModelContext,
    target: &T,
    mix: &MoveMix,
    t_prev: f64,
    t_new: f64,
    d: &mut D,
) -> bool
where
    T: SweepTarget + ?Sized,
    D: Draws + ?Sized,
{
    let a = d.index(bank.len());
    let q = splice(&bank[a], &s.p, t_prev);
    let la = ctx.log_lik_interval(&q, t_prev, t_new) - ctx.log_lik_interval(&s.p, t_prev, t_new);
    let accepted = d.accept(la);
    if accepted {
        s.atom = a;
        s.p = q;
    }
    let win = SweepWindow::new(t_prev, t_new, None);
    sweep_unchecked(&mut s.p, target, mix, &win, 1, d);
    accepted
}

fn windowed_to(pp: &MarkedPP, t: f64) -> Result<MarkedPP> {
    let mut pp = pp.clone();
    pp.extend_window(t)?;
    Ok(pp)
}

/// The n = 1 chain: RJMCMC on the windowed posterior from the empty process.
fn first_bank(ctx: &ModelContext, cfg: &CmConfig, mix: &MoveMix, rng: &mut ChaCha8Rng) -> Result<EmpiricalBank> {
    let t = cfg.inference_times[0];
    let target = ModelTarget::new(ctx, &TargetFlavor::Windowed { t });
    let win = SweepWindow::new(0.0, t, None);
    let mut p = Particle {
        pp: windowed_to(&MarkedPP::empty(0.0), t)?,
        sp: cfg.sp,
    };
    let mut d = RngDraws(rng);
    for _ in 0..cfg.burn_in {
        sweep_unchecked(&mut p, &target, mix, &win, 1, &mut d);
    }
    let states = (0..cfg.n_states)
        .map(|_| {
            sweep_unchecked(&mut p, &target, mix, &win, 1, &mut d);
            p.clone()
        })
        .collect();
    EmpiricalBank::new(t, states)
}

fn next_bank(
    ctx: &ModelContext,
    cfg: &CmConfig,
    mix: &MoveMix,
    bank: &EmpiricalBank,
    t_new: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(EmpiricalBank, f64)> {
    if bank.is_empty() {
        return Err(Error::Empty("empirical bank has no states".into()));
    }
    let t_prev = bank.t;
    let target = ModelTarget::new(ctx, &TargetFlavor::Windowed { t: t_new });
    let atom = {
        let mut d = RngDraws(&mut *rng);
        d.index(bank.len())
    };
    let p = prior_extension(&bank.states[atom], &cfg.hp, t_prev, t_new, rng)?;
    let mut s = BankState { atom, p };
    let mut d = RngDraws(rng);
    for _ in 0..cfg.burn_in {
        bank_iteration(&mut s, &bank.states, ctx, &target, mix, t_prev, t_new, &mut d);
    }
    let mut accepted = 0usize;
    let states = (0..cfg.n_states)
        .map(|_| {
            accepted += bank_iteration(&mut s, &bank.states, ctx, &target, mix, t_prev, t_new, &mut d) as usize;
            s.p.clone()
        })
        .collect();
    Ok((EmpiricalBank::new(t_new, states)?, accepted as f64 / cfg.n_states as f64))
}

pub fn run_cm_filter(data: &TickData, cfg: &CmConfig) -> Result<CmTrace> {
    cfg.validate()?;
    let ctx = ModelContext::new(data, &cfg.hp);
    let mix = cfg.moves.without_static();
    let times = &cfg.inference_times;
    let mut segments = Vec::new();
    let mut grid = Vec::new();
    let mut atom_acceptance = Vec::new();
    let mut banks = Vec::new();
    let mut bank: Option<EmpiricalBank> = None;
    for (i, &t) in times.iter().enumerate() {
        let mut rng = stream(cfg.seed, i as u64 + 1, 0, Purpose::Chain);
        let (next, acc) = match &bank {
            None => (first_bank(&ctx, cfg, &mix, &mut rng)?, None),
            Some(b) => {
                let (nb, acc) = next_bank(&ctx, cfg, &mix, b, t, &mut rng)?;
                (nb, Some(acc))
            }
        };
        let a = if i == 0 { 0.0 } else { times[i - 1] };
        let k = cfg.points_per_segment;
        let mut points: Vec<f64> = (1..=k).map(|j| a + (t - a) * j as f64 / (k + 1) as f64).collect();
        points.push(t);
        let ps = next.as_system()?;
        let (summary, filtered) = summarize_segment(&ps, &cfg.hp, t, &points, &[a], 0.0)?;
        segments.push(summary);
        grid.extend(points.into_iter().zip(filtered).map(|(t, f)| GridPoint {
            t,
            segment: i + 1,
            filtered: f,
            smoothed: None,
        }));
        atom_acceptance.push(acc);
        if cfg.keep_banks {
            banks.push(next.clone());
        }
        bank = Some(next);
    }
    let final_bank = bank.expect("at least one inference time");
    let ts: Vec<f64> = grid.iter().map(|g| g.t).collect();
    let sm = crate::samplers::posterior_intensity_summary(&final_bank.as_system()?, &cfg.hp, &ts)?;
    for (g, v) in grid.iter_mut().zip(sm) {
        g.smoothed = Some(v);
    }
    Ok(CmTrace {
        segments,
        grid,
        atom_acceptance,
        banks,
        final_bank,
    })
}
