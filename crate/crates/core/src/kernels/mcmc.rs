use super::{Draws, MoveKind, MoveMix, SweepWindow};
use crate::error::{Error, Result};
use crate::model::{
    log_pp_prior_unchecked, log_static_prior, Hyperparams, JumpChange, ModelContext, Particle,
    TargetFlavor,
};

/// What a proposal changed, so targets can evaluate ratios incrementally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Change {
    Jump(JumpChange),
    Static,
}

/// An unnormalized log density the sweep leaves invariant.
pub trait SweepTarget {
    fn hp(&self) -> &Hyperparams;

    fn log_density(&self, p: &Particle) -> f64;

    /// `log_density(to) - log_density(from)`.
    fn log_ratio(&self, from: &Particle, to: &Particle, _change: &Change) -> f64 {
        self.log_density(to) - self.log_density(from)
    }
}

/// The model posterior for one [`TargetFlavor`], with incremental ratios.
///
/// `survival_scale` multiplies the survival term; it is 1 except for
/// partial-likelihood targets.
#[derive(Clone, Debug)]
pub struct ModelTarget<'a> {
    ctx: &'a ModelContext<'a>,
    n_ticks: usize,
    lik_end: f64,
    window_end: f64,
    survival_scale: f64,
}

impl<'a> ModelTarget<'a> {
    pub fn new(ctx: &'a ModelContext<'a>, flavor: &TargetFlavor) -> Self {
        Self {
            ctx,
            n_ticks: flavor.n_ticks(ctx.data),
            lik_end: flavor.lik_end(),
            window_end: flavor.window_end(ctx.hp),
            survival_scale: 1.0,
        }
    }

    pub fn with_survival_scale(mut self, scale: f64) -> Self {
        self.survival_scale = scale;
        self
    }
}

impl SweepTarget for ModelTarget<'_> {
    fn hp(&self) -> &Hyperparams {
        self.ctx.hp
    }

    fn log_density(&self, p: &Particle) -> f64 {
        if p.pp.window_end() != self.window_end {
            return f64::NEG_INFINITY;
        }
        let hp = self.ctx.hp;
        self.ctx.sum_log_intensity(&p.pp, 0, self.n_ticks) + self.ctx.cauchy_sum(&p.sp, 0, self.n_ticks)
            - self.survival_scale * self.ctx.integral(&p.pp, 0.0, self.lik_end)
            + log_pp_prior_unchecked(p.pp.marks(), hp, self.window_end)
            + log_static_prior(&p.sp, hp)
    }

    fn log_ratio(&self, from: &Particle, to: &Particle, change: &Change) -> f64 {
        let hp = self.ctx.hp;
        match change {
            Change::Jump(c) => {
                let jump_prior = |(_, m): (f64, f64)| hp.nu.ln() + hp.log_mark_density(m);
                self.ctx.jump_log_lik_ratio_scaled(
                    &from.pp,
                    &to.pp,
                    c,
                    self.n_ticks,
                    self.lik_end,
                    self.survival_scale,
                ) + c.added.map_or(0.0, jump_prior)
                    - c.removed.map_or(0.0, jump_prior)
            }
            Change::Static => {
                self.ctx.cauchy_log_ratio(&from.sp, &to.sp, self.n_ticks) + log_static_prior(&to.sp, hp)
                    - log_static_prior(&from.sp, hp)
            }
        }
    }
}

fn finish<D: Draws + ?Sized>(p: &mut Particle, q: Particle, log_alpha: f64, d: &mut D) -> bool {
    if d.accept(log_alpha) {
        *p = q;
        true
    } else {
        false
    }
}

/// One Metropolis–Hastings / reversible-jump move of the given kind.
/// Returns whether it was accepted.
pub fn single_move<T, D>(
    kind: MoveKind,
    p: &mut Particle,
    target: &T,
    mix: &MoveMix,
    win: &SweepWindow,
    d: &mut D,
) -> bool
where
    T: SweepTarget + ?Sized,
    D: Draws + ?Sized,
{
    let hp = target.hp();
    match kind {
        MoveKind::Birth => {
            let (_, _, a) = win.active(&p.pp);
            if !(win.hi > a) {
                return false;
            }
            let u = d.window_time(a, win.hi);
            if !(u > a && u < win.hi) {
                return false;
            }
            let m = d.prior_mark(hp);
            let mut q = p.clone();
            if q.pp.insert(u, m).is_none() {
                return false;
            }
            let (_, n_new, _) = win.active(&q.pp);
            let change = Change::Jump(JumpChange {
                removed: None,
                added: Some((u, m)),
            });
            let la = target.log_ratio(p, &q, &change) + mix.p_death.ln() - (n_new as f64).ln()
                - mix.p_birth.ln()
                - d.window_time_ln_density(a, win.hi, u)
                - d.prior_mark_ln_density(hp, m);
            finish(p, q, la, d)
        }
        MoveKind::Death => {
            let (first, n, _) = win.active(&p.pp);
            if n == 0 {
                return false;
            }
            let j = first + d.index(n);
            let mut q = p.clone();
            let (t, m) = q.pp.remove(j);
            let (_, _, a_new) = win.active(&q.pp);
            let change = Change::Jump(JumpChange {
                removed: Some((t, m)),
                added: None,
            });
            let la = target.log_ratio(p, &q, &change) + mix.p_birth.ln()
                + d.window_time_ln_density(a_new, win.hi, t)
                + d.prior_mark_ln_density(hp, m)
                - mix.p_death.ln()
                + (n as f64).ln();
            finish(p, q, la, d)
        }
        MoveKind::Shift => {
            let (first, n, _) = win.active(&p.pp);
            if n == 0 {
                return false;
            }
            let j = first + d.index(n);
            let times = p.pp.times();
            let (t, m) = (times[j], p.pp.marks()[j]);
            let t_new = t + mix.shift_frac / hp.nu * d.std_normal();
            let lower = if j > 0 { times[j - 1] } else { 0.0 }.max(win.lo);
            let upper = times.get(j + 1).copied().unwrap_or(p.pp.window_end()).min(win.hi);
            if !(t_new > lower && t_new < upper) {
                return false;
            }
            let mut q = p.clone();
            q.pp.set_time(j, t_new);
            let change = Change::Jump(JumpChange {
                removed: Some((t, m)),
                added: Some((t_new, m)),
            });
            let la = target.log_ratio(p, &q, &change);
            finish(p, q, la, d)
        }
        MoveKind::Mark => {
            let (first, n, _) = win.active(&p.pp);
            if n == 0 {
                return false;
            }
            let j = first + d.index(n);
            let (t, m) = (p.pp.times()[j], p.pp.marks()[j]);
            let m_new = m * (mix.mark_log_scale * d.std_normal()).exp();
            let mut q = p.clone();
            q.pp.set_mark(j, m_new);
            let change = Change::Jump(JumpChange {
                removed: Some((t, m)),
                added: Some((t, m_new)),
            });
            let la = target.log_ratio(p, &q, &change) + (m_new / m).ln();
            finish(p, q, la, d)
        }
        MoveKind::Mu => {
            let mut q = p.clone();
            q.sp.mu += mix.mu_scale * d.std_normal();
            let la = target.log_ratio(p, &q, &Change::Static);
            finish(p, q, la, d)
        }
        MoveKind::Sigma => {
            let mut q = p.clone();
            q.sp.sigma *= (mix.sigma_log_scale * d.std_normal()).exp();
            let la = target.log_ratio(p, &q, &Change::Static) + (q.sp.sigma / p.sp.sigma).ln();
            finish(p, q, la, d)
        }
    }
}

/// `iterations` MCMC iterates without checking the start.
pub(crate) fn sweep_unchecked<T, D>(
    p: &mut Particle,
    target: &T,
    mix: &MoveMix,
    win: &SweepWindow,
    iterations: usize,
    d: &mut D,
) where
    T: SweepTarget + ?Sized,
    D: Draws + ?Sized,
{
    let probs = mix.probs();
    for _ in 0..iterations * mix.moves_per_sweep {
        let kind = MoveKind::ALL[d.choose(&probs)];
        single_move(kind, p, target, mix, win, d);
    }
}

/// Runs `iterations` MCMC iterates, each `mix.moves_per_sweep` moves drawn
/// from the mix. Errors if the target is zero at the start.
pub fn rjmcmc_sweep<T, D>(
    mut p: Particle,
    target: &T,
    mix: &MoveMix,
    win: &SweepWindow,
    iterations: usize,
    d: &mut D,
) -> Result<Particle>
where
    T: SweepTarget + ?Sized,
    D: Draws + ?Sized,
{
    if !target.log_density(&p).is_finite() {
        return Err(Error::InvalidStart);
    }
    sweep_unchecked(&mut p, target, mix, win, iterations, d);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngDraws;
    use crate::model::{log_target, MarkedPP, StaticParams, TickData};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian in μ only; everything else fixed.
    struct Quadratic {
        hp: Hyperparams,
        mean: f64,
        sd: f64,
    }

    impl SweepTarget for Quadratic {
        fn hp(&self) -> &Hyperparams {
            &self.hp
        }
        fn log_density(&self, p: &Particle) -> f64 {
            let z = (p.sp.mu - self.mean) / self.sd;
            -0.5 * z * z
        }
    }

    fn particle(window: f64) -> Particle {
        Particle {
            pp: MarkedPP::empty(window),
            sp: StaticParams::new(0.0, 2.5e-4).unwrap(),
        }
    }

    fn data(seed: u64, end: f64, r: usize) -> TickData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<f64> = (0..r).map(|_| rng.random::<f64>() * end).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        let x = t.iter().map(|_| (rng.random::<f64>() - 0.5) * 1e-3).collect();
        TickData::new(t, x).unwrap()
    }

    #[test]
    fn mu_moves_sample_a_gaussian() {
        let target = Quadratic {
            hp: Hyperparams::default(),
            mean: 1e-4,
            sd: 2e-4,
        };
        let mix = MoveMix {
            p_birth: 0.0,
            p_death: 0.0,
            p_shift: 0.0,
            p_mark: 0.0,
            p_mu: 1.0,
            p_sigma: 0.0,
            mu_scale: 4e-4,
            moves_per_sweep: 1,
            ..MoveMix::default()
        };
        let win = SweepWindow::new(0.0, 1.0, None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = particle(1.0);
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            sweep_unchecked(&mut p, &target, &mix, &win, 1, &mut RngDraws(&mut rng));
            xs.push(p.sp.mu);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        // Batch means for the autocorrelated chain.
        let b = 100;
        let bm: Vec<f64> = xs.chunks(n / b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let bvar = bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        let se = (bvar / b as f64).sqrt();
        assert!((mean - 1e-4).abs() < 3.0 * se, "mean {mean} se {se}");
        let sq: Vec<f64> = xs.iter().map(|x| (x - 1e-4).powi(2)).collect();
        let sqm: Vec<f64> = sq.chunks(n / b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let sq_mean = sq.iter().sum::<f64>() / n as f64;
        let sq_se = (sqm.iter().map(|x| (x - sq_mean).powi(2)).sum::<f64>() / (b - 1) as f64 / b as f64).sqrt();
        assert!((sq_mean - 4e-8).abs() < 3.0 * sq_se, "var {var} second moment {sq_mean} se {sq_se}");
    }

    #[test]
    fn zero_iterations_is_identity() {
        let hp = Hyperparams::default();
        let d = data(2, 0.3, 50);
        let ctx = ModelContext::new(&d, &hp);
        let target = ModelTarget::new(&ctx, &TargetFlavor::Windowed { t: 0.3 });
        let p = Particle {
            pp: MarkedPP::new(vec![0.1], vec![700.0], 0.3).unwrap(),
            ..particle(0.3)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let win = SweepWindow::new(0.0, 0.3, None);
        let out = rjmcmc_sweep(p.clone(), &target, &MoveMix::default(), &win, 0, &mut RngDraws(&mut rng)).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn invalid_start_is_an_error() {
        let hp = Hyperparams::default();
        let d = data(2, 0.3, 50);
        let ctx = ModelContext::new(&d, &hp);
        let target = ModelTarget::new(&ctx, &TargetFlavor::Windowed { t: 0.3 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let win = SweepWindow::new(0.0, 0.3, None);
        let wrong_window = particle(0.5);
        let r = rjmcmc_sweep(wrong_window, &target, &MoveMix::default(), &win, 1, &mut RngDraws(&mut rng));
        assert!(matches!(r, Err(Error::InvalidStart)));
    }

    #[test]
    fn incremental_ratios_match_full_evaluation() {
        let hp = Hyperparams::default();
        let d = data(3, 0.9, 400);
        let ctx = ModelContext::new(&d, &hp);
        let flavors = [
            TargetFlavor::Windowed { t: 0.3 },
            TargetFlavor::Saturated { t: 0.3 },
            TargetFlavor::Tempered {
                n_data: d.count_upto(0.3) - 3,
                t_seg: 0.3,
                survival_to: 0.25,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for flavor in flavors {
            let target = ModelTarget::new(&ctx, &flavor);
            let end = flavor.window_end(&hp);
            for _ in 0..100 {
                let k = rng.random_range(1..30);
                let mut t: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * end).collect();
                t.sort_by(f64::total_cmp);
                let m = (0..k).map(|_| rng.random::<f64>() * 3000.0 + 1.0).collect();
                let from = Particle {
                    pp: MarkedPP::new(t, m, end).unwrap(),
                    sp: StaticParams::new(rng.random::<f64>() * 1e-4, 1e-4 + rng.random::<f64>() * 4e-4).unwrap(),
                };
                let mut to = from.clone();
                let change = match rng.random_range(0..4) {
                    0 => {
                        let u = rng.random::<f64>() * end;
                        let mk = 500.0;
                        to.pp.insert(u, mk).unwrap();
                        Change::Jump(JumpChange { removed: None, added: Some((u, mk)) })
                    }
                    1 => {
                        let r = to.pp.remove(rng.random_range(0..k));
                        Change::Jump(JumpChange { removed: Some(r), added: None })
                    }
                    2 => {
                        let j = rng.random_range(0..k);
                        let (tj, mj) = (to.pp.times()[j], to.pp.marks()[j]);
                        to.pp.set_mark(j, mj * 1.7);
                        Change::Jump(JumpChange { removed: Some((tj, mj)), added: Some((tj, mj * 1.7)) })
                    }
                    _ => {
                        to.sp.mu += 3e-5;
                        to.sp.sigma *= 1.3;
                        Change::Static
                    }
                };
                let fast = target.log_ratio(&from, &to, &change);
                let slow = log_target(&to, &d, &hp, &flavor).unwrap() - log_target(&from, &d, &hp, &flavor).unwrap();
                assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{flavor:?}: {fast} vs {slow}");
                let dens = target.log_density(&to) - target.log_density(&from);
                assert!((dens - slow).abs() < 1e-10 * slow.abs().max(1.0));
            }
        }
    }

    #[test]
    fn limited_moves_leave_old_jumps_alone() {
        let hp = Hyperparams::default();
        let d = data(4, 0.9, 300);
        let ctx = ModelContext::new(&d, &hp);
        let target = ModelTarget::new(&ctx, &TargetFlavor::Saturated { t: 0.4 });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<f64> = (1..=40).map(|i| i as f64 * 0.02).collect();
        let mut p = Particle {
            pp: MarkedPP::new(t, vec![900.0; 40], 0.9).unwrap(),
            ..particle(0.9)
        };
        let w = 5;
        let mix = MoveMix { window_limit: Some(w), ..MoveMix::default() };
        let win = SweepWindow::new(0.0, 0.4, Some(w));
        let probs = mix.probs();
        for _ in 0..2000 {
            let before = p.clone();
            let (first, _, _) = win.active(&before.pp);
            let kind = MoveKind::ALL[RngDraws(&mut rng).choose(&probs)];
            single_move(kind, &mut p, &target, &mix, &win, &mut RngDraws(&mut rng));
            assert_eq!(&p.pp.times()[..first], &before.pp.times()[..first]);
            assert_eq!(&p.pp.marks()[..first], &before.pp.marks()[..first]);
            let tail = |q: &Particle| q.pp.times()[q.pp.count_before(0.4)..].to_vec();
            assert_eq!(tail(&p), tail(&before));
        }
        // Without births and deaths the movable set is fixed for a whole sweep.
        let fixed = MoveMix {
            p_birth: 0.0,
            p_death: 0.0,
            p_shift: 0.4,
            p_mark: 0.4,
            ..mix
        };
        let (first, _, _) = win.active(&p.pp);
        let out = rjmcmc_sweep(p.clone(), &target, &fixed, &win, 200, &mut RngDraws(&mut rng)).unwrap();
        assert_eq!(&out.pp.times()[..first], &p.pp.times()[..first]);
        assert_eq!(&out.pp.marks()[..first], &p.pp.marks()[..first]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sweeps_keep_processes_valid(seed in 0u64..10_000, limit in prop::option::of(1usize..6)) {
            let hp = Hyperparams::default();
            let d = data(seed, 0.2, 80);
            let ctx = ModelContext::new(&d, &hp);
            let target = ModelTarget::new(&ctx, &TargetFlavor::Windowed { t: 0.2 });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mix = MoveMix { window_limit: limit, ..MoveMix::default() };
            let win = SweepWindow::new(0.0, 0.2, limit);
            let out = rjmcmc_sweep(particle(0.2), &target, &mix, &win, 30, &mut RngDraws(&mut rng)).unwrap();
            prop_assert!(out.pp.is_valid());
            prop_assert!(out.sp.sigma > 0.0);
            prop_assert!(target.log_density(&out).is_finite());
        }
    }
}
