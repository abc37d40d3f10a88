use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::model::{Hyperparams, JumpChange, ModelContext, Particle};

/// Forward-kernel mixture for growing the process from `t_{n-1}` to `t_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionMix {
    pub p_birth: f64,
    pub p_extend: f64,
    pub p_prior: f64,
    /// Random-walk scale of the extend move in the logit coordinate.
    pub theta: f64,
}

impl Default for ExtensionMix {
    fn default() -> Self {
        Self {
            p_birth: 0.495,
            p_extend: 0.495,
            p_prior: 0.01,
            theta: 0.5,
        }
    }
}

impl ExtensionMix {
    pub fn validate(&self) -> Result<()> {
        let p = [self.p_birth, self.p_extend, self.p_prior];
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("extension.p_*", "must be >= 0 and sum to 1"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(invalid("theta", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    Birth,
    Extend,
    /// Extend was drawn but the process had fewer than two jumps.
    ExtendFallback,
    Prior,
}

fn check_step(p: &Particle, t_prev: f64, t_new: f64) -> Result<()> {
    if p.pp.window_end() != t_prev {
        return Err(Error::Domain(format!(
            "particle lives on [0, {}], expected [0, {t_prev}]",
            p.pp.window_end()
        )));
    }
    if !(t_new > t_prev) {
        return Err(Error::Domain(format!("t_n = {t_new} must exceed t_(n-1) = {t_prev}")));
    }
    Ok(())
}

fn widened(p: &Particle, t_new: f64) -> Particle {
    let mut q = p.clone();
    q.pp.set_window_end_unchecked(t_new);
    q
}

fn draw_mark<R: Rng + ?Sized>(hp: &Hyperparams, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / hp.gamma
}

/// Uniform draw in the open interval `(lo, hi)`.
fn open_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    loop {
        let u = lo + (hi - lo) * rng.random::<f64>();
        if u > lo && u < hi {
            return u;
        }
    }
}

/// log Φ(x), accurate far into the lower tail.
fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Log target ratio `π_n(x') / π_{n-1}(x)` for the windowed posterior, where
/// `x'` is `x` widened to `t_new` and then changed by `change`.
fn windowed_ratio(
    ctx: &ModelContext,
    widened: &Particle,
    next: &Particle,
    change: &JumpChange,
    t_prev: f64,
    t_new: f64,
) -> f64 {
    let hp = ctx.hp;
    let n = ctx.data.count_upto(t_new);
    let jump_prior = |(_, m): (f64, f64)| hp.nu.ln() + hp.log_mark_density(m);
    ctx.log_lik_interval(widened, t_prev, t_new)
        + ctx.jump_log_lik_ratio(&widened.pp, &next.pp, change, n, t_new)
        - hp.nu * (t_new - t_prev)
        + change.added.map_or(0.0, jump_prior)
        - change.removed.map_or(0.0, jump_prior)
}

/// Adds one jump uniform on `(φ_last, t_n)` with a prior mark; `φ_last = 0`
/// for an empty process. Returns the new particle and its log incremental
/// weight for the windowed targets.
pub fn smc_birth_move<R: Rng + ?Sized>(
    p: &Particle,
    ctx: &ModelContext,
    t_prev: f64,
    t_new: f64,
    rng: &mut R,
) -> Result<(Particle, f64)> {
    check_step(p, t_prev, t_new)?;
    let hp = ctx.hp;
    let wide = widened(p, t_new);
    let last = p.pp.last_time().unwrap_or(0.0);
    let u = open_uniform(last, t_new, rng);
    let m = draw_mark(hp, rng);
    let mut next = wide.clone();
    next.pp.push_unchecked(u, m);
    let change = JumpChange {
        removed: None,
        added: Some((u, m)),
    };
    let w = windowed_ratio(ctx, &wide, &next, &change, t_prev, t_new) + (t_new - last).ln()
        - hp.log_mark_density(m);
    Ok((next, w))
}

/// Logit coordinate of `φ` on `(a, end)`.
fn to_logit(phi: f64, a: f64, end: f64) -> f64 {
    ((phi - a) / (end - phi)).ln()
}

fn from_logit(u: f64, a: f64, end: f64) -> f64 {
    a + (end - a) / (1.0 + (-u).exp())
}

/// log |d logit / dφ|.
fn ln_jacobian(phi: f64, a: f64, end: f64) -> f64 {
    (end - a).ln() - (phi - a).ln() - (end - phi).ln()
}

/// Redraws the last jump through a Gaussian random walk on
/// `log((φ_k - φ_{k-1}) / (t_n - φ_k))` with a fresh prior mark.
///
/// The backward kernel is the same walk truncated to `φ < t_{n-1}`, which
/// contributes the `log Φ` normalizer. With fewer than two jumps this
/// falls back to [`smc_birth_move`]; the flag reports that.
pub fn smc_extend_move<R: Rng + ?Sized>(
    p: &Particle,
    ctx: &ModelContext,
    t_prev: f64,
    t_new: f64,
    theta: f64,
    rng: &mut R,
) -> Result<(Particle, f64, bool)> {
    check_step(p, t_prev, t_new)?;
    let k = p.pp.len();
    if k < 2 {
        let (q, w) = smc_birth_move(p, ctx, t_prev, t_new, rng)?;
        return Ok((q, w, true));
    }
    let hp = ctx.hp;
    let a = p.pp.times()[k - 2];
    let (phi, zeta) = (p.pp.times()[k - 1], p.pp.marks()[k - 1]);
    let u = to_logit(phi, a, t_new);
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let u_new = u + theta * z;
    let phi_new = from_logit(u_new, a, t_new);
    let m_new = draw_mark(hp, rng);
    let wide = widened(p, t_new);
    if !(phi_new > a && phi_new < t_new) {
        return Ok((wide, f64::NEG_INFINITY, false));
    }
    let mut next = wide.clone();
    next.pp.set_time(k - 1, phi_new);
    next.pp.set_mark(k - 1, m_new);
    let change = JumpChange {
        removed: Some((phi, zeta)),
        added: Some((phi_new, m_new)),
    };
    let u_max = to_logit(t_prev, a, t_new);
    let w = windowed_ratio(ctx, &wide, &next, &change, t_prev, t_new) + ln_jacobian(phi, a, t_new)
        - ln_jacobian(phi_new, a, t_new)
        + hp.log_mark_density(zeta)
        - hp.log_mark_density(m_new)
        - ln_norm_cdf((u_max - u_new) / theta);
    Ok((next, w, false))
}

/// Appends a prior draw on `(t_prev, t_new]`: Poisson(ν·δ) jumps with
/// uniform times and prior marks.
pub fn prior_extension<R: Rng + ?Sized>(
    p: &Particle,
    hp: &Hyperparams,
    t_prev: f64,
    t_new: f64,
    rng: &mut R,
) -> Result<Particle> {
    check_step(p, t_prev, t_new)?;
    let mut q = widened(p, t_new);
    let rate = hp.nu * (t_new - t_prev);
    let count = if rate > 0.0 {
        Poisson::new(rate)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| open_uniform(t_prev, t_new, rng)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for t in times {
        let m = draw_mark(hp, rng);
        q.pp.push_unchecked(t, m);
    }
    Ok(q)
}

/// One draw from the extension mixture with its log incremental weight for
/// the windowed posterior. Each component is weighted with its own
/// forward/backward pair.
pub fn extend_particle<R: Rng + ?Sized>(
    p: &Particle,
    ctx: &ModelContext,
    mix: &ExtensionMix,
    t_prev: f64,
    t_new: f64,
    rng: &mut R,
) -> Result<(Particle, f64, ExtensionKind)> {
    let u: f64 = rng.random::<f64>() * (mix.p_birth + mix.p_extend + mix.p_prior);
    if u < mix.p_birth {
        let (q, w) = smc_birth_move(p, ctx, t_prev, t_new, rng)?;
        Ok((q, w, ExtensionKind::Birth))
    } else if u < mix.p_birth + mix.p_extend {
        let (q, w, fell_back) = smc_extend_move(p, ctx, t_prev, t_new, mix.theta, rng)?;
        let kind = if fell_back {
            ExtensionKind::ExtendFallback
        } else {
            ExtensionKind::Extend
        };
        Ok((q, w, kind))
    } else {
        let q = prior_extension(p, ctx.hp, t_prev, t_new, rng)?;
        let w = ctx.log_lik_interval(&q, t_prev, t_new);
        Ok((q, w, ExtensionKind::Prior))
    }
}
