//! Particle moves: a reversible-jump MCMC sweep that leaves any
//! [`SweepTarget`] invariant, and the SMC space-extension proposals.

mod mcmc;
mod smc;

pub use mcmc::{rjmcmc_sweep, single_move, Change, ModelTarget, SweepTarget};
pub(crate) use mcmc::sweep_unchecked;
pub use smc::{
    extend_particle, prior_extension, smc_birth_move, smc_extend_move, ExtensionKind,
    ExtensionMix,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Hyperparams, MarkedPP};

/// The RJMCMC move types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Birth,
    Death,
    Shift,
    Mark,
    Mu,
    Sigma,
}

impl MoveKind {
    pub const ALL: [MoveKind; 6] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Shift,
        MoveKind::Mark,
        MoveKind::Mu,
        MoveKind::Sigma,
    ];
}

/// Move probabilities and random-walk scales of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveMix {
    pub p_birth: f64,
    pub p_death: f64,
    pub p_shift: f64,
    pub p_mark: f64,
    pub p_mu: f64,
    pub p_sigma: f64,
    /// Shift step as a fraction of the mean prior gap `1/nu`.
    pub shift_frac: f64,
    pub mark_log_scale: f64,
    pub mu_scale: f64,
    pub sigma_log_scale: f64,
    /// Moves drawn per MCMC iterate.
    pub moves_per_sweep: usize,
    /// With `Some(w)`, jump moves only touch the last `w` jumps of the window.
    pub window_limit: Option<usize>,
}

impl Default for MoveMix {
    fn default() -> Self {
        Self {
            p_birth: 0.2,
            p_death: 0.2,
            p_shift: 0.2,
            p_mark: 0.2,
            p_mu: 0.1,
            p_sigma: 0.1,
            shift_frac: 0.25,
            mark_log_scale: 0.5,
            mu_scale: 1e-4,
            sigma_log_scale: 0.3,
            moves_per_sweep: 6,
            window_limit: None,
        }
    }
}

impl MoveMix {
    pub fn probs(&self) -> [f64; 6] {
        [self.p_birth, self.p_death, self.p_shift, self.p_mark, self.p_mu, self.p_sigma]
    }

    pub fn prob(&self, kind: MoveKind) -> f64 {
        self.probs()[kind as usize]
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.probs();
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("kernels.p_*", "move probabilities must be >= 0"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("kernels.p_*", format!("move probabilities sum to {total}, not 1")));
        }
        if (self.p_birth > 0.0) != (self.p_death > 0.0) {
            return Err(invalid("kernels.p_birth", "birth and death must both be on or both off"));
        }
        for (name, v) in [
            ("shift_frac", self.shift_frac),
            ("mark_log_scale", self.mark_log_scale),
            ("mu_scale", self.mu_scale),
            ("sigma_log_scale", self.sigma_log_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.window_limit == Some(0) {
            return Err(invalid("window_limit", "must be >= 1"));
        }
        Ok(())
    }

    /// The same mix with the μ and σ moves switched off.
    pub fn without_static(&self) -> Self {
        let rest = self.p_birth + self.p_death + self.p_shift + self.p_mark;
        Self {
            p_birth: self.p_birth / rest,
            p_death: self.p_death / rest,
            p_shift: self.p_shift / rest,
            p_mark: self.p_mark / rest,
            p_mu: 0.0,
            p_sigma: 0.0,
            ..self.clone()
        }
    }
}

/// Interval `(lo, hi)` of jump times the jump moves may touch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepWindow {
    pub lo: f64,
    pub hi: f64,
    pub limit: Option<usize>,
}

impl SweepWindow {
    pub fn new(lo: f64, hi: f64, limit: Option<usize>) -> Self {
        Self { lo, hi, limit }
    }

    /// First movable jump index, number of movable jumps, and the left end
    /// of the birth region.
    ///
    /// With a limit `w` and at least `w` jumps in `(lo, hi)`, only the last
    /// `w` of them move and births land after the oldest of those, so a
    /// newborn jump is always among the movable ones of the new state.
    pub fn active(&self, pp: &MarkedPP) -> (usize, usize, f64) {
        let t = pp.times();
        let i0 = t.partition_point(|&p| p <= self.lo);
        let i1 = t.partition_point(|&p| p < self.hi);
        let k = i1.saturating_sub(i0);
        match self.limit {
            Some(w) if k >= w => (i1 - w, w, t[i1 - w]),
            _ => (i0, k, self.lo),
        }
    }
}

/// Source of randomness for the moves. Implemented over a real RNG, and in
/// tests over an exhaustive enumeration of discrete outcomes.
pub trait Draws {
    /// Index drawn with the given probabilities.
    fn choose(&mut self, probs: &[f64]) -> usize;
    /// Uniform index in `0..n`.
    fn index(&mut self, n: usize) -> usize;
    fn std_normal(&mut self) -> f64;
    /// A time in `(lo, hi)`.
    fn window_time(&mut self, lo: f64, hi: f64) -> f64;
    fn window_time_ln_density(&self, lo: f64, hi: f64, t: f64) -> f64;
    fn prior_mark(&mut self, hp: &Hyperparams) -> f64;
    fn prior_mark_ln_density(&self, hp: &Hyperparams, m: f64) -> f64;
    /// Metropolis–Hastings coin.
    fn accept(&mut self, log_alpha: f64) -> bool;
}

/// [`Draws`] backed by a random number generator.
pub struct RngDraws<'r, R: Rng + ?Sized>(pub &'r mut R);

impl<R: Rng + ?Sized> Draws for RngDraws<'_, R> {
    fn choose(&mut self, probs: &[f64]) -> usize {
        let u: f64 = self.0.random();
        let mut cum = 0.0;
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last = i;
                if u < cum {
                    return i;
                }
            }
        }
        last
    }

    fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    fn std_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    fn window_time(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.random::<f64>()
    }

    fn window_time_ln_density(&self, lo: f64, hi: f64, t: f64) -> f64 {
        if t > lo && t < hi {
            -(hi - lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn prior_mark(&mut self, hp: &Hyperparams) -> f64 {
        let u: f64 = self.0.random();
        -(-u).ln_1p() / hp.gamma
    }

    fn prior_mark_ln_density(&self, hp: &Hyperparams, m: f64) -> f64 {
        hp.log_mark_density(m)
    }

    fn accept(&mut self, log_alpha: f64) -> bool {
        if log_alpha.is_nan() {
            return false;
        }
        log_alpha >= 0.0 || self.0.random::<f64>().ln() < log_alpha
    }
}

#[cfg(test)]
pub(crate) mod enumerate;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mix_is_valid() {
        MoveMix::default().validate().unwrap();
        let m = MoveMix::default().without_static();
        m.validate().unwrap();
        assert_eq!(m.p_mu, 0.0);
        assert!((m.p_birth - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bad_mix_is_rejected() {
        let mut m = MoveMix {
            p_birth: 0.5,
            ..MoveMix::default()
        };
        assert!(m.validate().is_err());
        m = MoveMix {
            window_limit: Some(0),
            ..MoveMix::default()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn limited_window_keeps_the_last_jumps() {
        let pp = MarkedPP::new(vec![0.1, 0.2, 0.3, 0.4, 0.5], vec![1.0; 5], 1.0).unwrap();
        let w = SweepWindow::new(0.0, 0.45, Some(2));
        assert_eq!(w.active(&pp), (2, 2, 0.3));
        let w = SweepWindow::new(0.15, 0.45, None);
        assert_eq!(w.active(&pp), (1, 3, 0.15));
        let w = SweepWindow::new(0.15, 0.45, Some(5));
        assert_eq!(w.active(&pp), (1, 3, 0.15));
    }
}
