//! Exhaustive enumeration of move outcomes on a discretized state space.
//!
//! [`EnumDraws`] replaces every random draw by a finite branch, and walks
//! all branch sequences like an odometer. Running a move once per sequence
//! yields its exact transition probabilities, so the real move code can be
//! checked for detailed balance and stationarity.
//!
//! Discretization: jump times are cell centres of width `h`, marks sit on a
//! geometric grid with ratio `exp(mark_log_scale)`, μ on a lattice of
//! spacing `mu_scale`, σ on a geometric grid with ratio
//! `exp(sigma_log_scale)`. The standard normal is ±1. Continuous densities
//! reported to the moves are branch probabilities divided by cell volume.
//! The moves see the continuous target restricted to the grid; the chain
//! they define on the grid then has the continuous target times cell
//! volumes as its stationary law.

use std::collections::HashMap;

use super::{Change, Draws, SweepTarget};
use crate::model::{Hyperparams, MarkedPP, Particle, StaticParams};

#[derive(Clone, Debug)]
pub struct Grid {
    pub h: f64,
    pub cells: usize,
    pub mark0: f64,
    pub mark_tau: f64,
    pub n_marks: usize,
    pub mu_step: f64,
    pub n_mu: i64,
    pub sigma0: f64,
    pub sigma_tau: f64,
    pub n_sigma: usize,
    pub max_jumps: usize,
}

/// Grid coordinates of a state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Key {
    pub jumps: Vec<(usize, usize)>,
    pub mu: i64,
    pub sigma: usize,
}

impl Grid {
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn mark(&self, j: usize) -> f64 {
        self.mark0 * (self.mark_tau * j as f64).exp()
    }

    pub fn window_end(&self) -> f64 {
        self.cells as f64 * self.h
    }

    fn snap(x: f64, lo: f64, step: f64) -> Option<i64> {
        let r = ((x - lo) / step).round();
        if ((x - lo) / step - r).abs() < 1e-7 {
            Some(r as i64)
        } else {
            None
        }
    }

    pub fn key(&self, p: &Particle) -> Option<Key> {
        if p.pp.len() > self.max_jumps {
            return None;
        }
        let mut jumps = Vec::new();
        for (&t, &m) in p.pp.times().iter().zip(p.pp.marks()) {
            let i = Self::snap(t, 0.5 * self.h, self.h)?;
            let j = Self::snap(m.ln(), self.mark0.ln(), self.mark_tau)?;
            if i < 0 || i as usize >= self.cells || j < 0 || j as usize >= self.n_marks {
                return None;
            }
            // Two jumps in one cell only arise from rounding.
            if jumps.last().is_some_and(|&(prev, _)| prev >= i as usize) {
                return None;
            }
            jumps.push((i as usize, j as usize));
        }
        let mu = Self::snap(p.sp.mu, 0.0, self.mu_step)?;
        let sigma = Self::snap(p.sp.sigma.ln(), self.sigma0.ln(), self.sigma_tau)?;
        if mu.abs() > self.n_mu || sigma < 0 || sigma as usize >= self.n_sigma {
            return None;
        }
        Some(Key {
            jumps,
            mu,
            sigma: sigma as usize,
        })
    }

    pub fn particle(&self, key: &Key) -> Particle {
        let times = key.jumps.iter().map(|&(i, _)| self.center(i)).collect();
        let marks = key.jumps.iter().map(|&(_, j)| self.mark(j)).collect();
        Particle {
            pp: MarkedPP::new(times, marks, self.window_end()).unwrap(),
            sp: StaticParams::new(
                key.mu as f64 * self.mu_step,
                self.sigma0 * (self.sigma_tau * key.sigma as f64).exp(),
            )
            .unwrap(),
        }
    }

    /// Every state with at most `max_jumps` jumps.
    pub fn states(&self) -> Vec<Key> {
        let mut configs: Vec<Vec<(usize, usize)>> = vec![vec![]];
        let mut frontier = configs.clone();
        for _ in 0..self.max_jumps {
            let mut next = Vec::new();
            for c in &frontier {
                let start = c.last().map_or(0, |&(i, _)| i + 1);
                for i in start..self.cells {
                    for j in 0..self.n_marks {
                        let mut d = c.clone();
                        d.push((i, j));
                        next.push(d);
                    }
                }
            }
            configs.extend(next.iter().cloned());
            frontier = next;
        }
        let mut out = Vec::new();
        for c in configs {
            for mu in -self.n_mu..=self.n_mu {
                for sigma in 0..self.n_sigma {
                    out.push(Key {
                        jumps: c.clone(),
                        mu,
                        sigma,
                    });
                }
            }
        }
        out
    }

    /// Log cell volume of a state.
    pub fn ln_volume(&self, p: &Particle) -> f64 {
        let marks: f64 = p.pp.marks().iter().map(|m| (m * self.mark_tau).ln()).sum();
        p.pp.len() as f64 * self.h.ln() + marks + (p.sp.sigma * self.sigma_tau).ln() + self.mu_step.ln()
    }

    fn mark_probs(&self, hp: &Hyperparams) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_marks)
            .map(|j| {
                let q = self.mark(j);
                (hp.log_mark_density(q)).exp() * q
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    }
}

/// Continuous target restricted to the grid.
pub struct DiscreteTarget<'a, T: SweepTarget> {
    pub inner: &'a T,
    pub grid: &'a Grid,
}

impl<T: SweepTarget> SweepTarget for DiscreteTarget<'_, T> {
    fn hp(&self) -> &Hyperparams {
        self.inner.hp()
    }

    fn log_density(&self, p: &Particle) -> f64 {
        if self.grid.key(p).is_none() {
            return f64::NEG_INFINITY;
        }
        self.inner.log_density(p)
    }

    fn log_ratio(&self, from: &Particle, to: &Particle, change: &Change) -> f64 {
        if self.grid.key(to).is_none() {
            return f64::NEG_INFINITY;
        }
        self.inner.log_ratio(from, to, change)
    }
}

pub struct EnumDraws<'g> {
    grid: &'g Grid,
    mark_probs: Vec<f64>,
    path: Vec<(usize, usize)>,
    pos: usize,
    pub prob: f64,
}

impl<'g> EnumDraws<'g> {
    pub fn new(grid: &'g Grid, hp: &Hyperparams) -> Self {
        Self {
            grid,
            mark_probs: grid.mark_probs(hp),
            path: Vec::new(),
            pos: 0,
            prob: 1.0,
        }
    }

    fn branch(&mut self, probs: &[f64]) -> usize {
        if self.pos == self.path.len() {
            self.path.push((0, probs.len()));
        }
        let (c, n) = self.path[self.pos];
        assert_eq!(n, probs.len(), "branch structure changed between runs");
        self.pos += 1;
        self.prob *= probs[c];
        c
    }

    /// Advances to the next branch sequence; false when all are done.
    pub fn advance(&mut self) -> bool {
        self.path.truncate(self.pos);
        self.pos = 0;
        self.prob = 1.0;
        while let Some(last) = self.path.last_mut() {
            last.0 += 1;
            if last.0 < last.1 {
                return true;
            }
            self.path.pop();
        }
        false
    }

    fn centers_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        (0..self.grid.cells)
            .map(|i| self.grid.center(i))
            .filter(|&c| c > lo && c < hi)
            .collect()
    }
}

impl Draws for EnumDraws<'_> {
    fn choose(&mut self, probs: &[f64]) -> usize {
        self.branch(probs)
    }

    fn index(&mut self, n: usize) -> usize {
        self.branch(&vec![1.0 / n as f64; n])
    }

    fn std_normal(&mut self) -> f64 {
        [-1.0, 1.0][self.branch(&[0.5, 0.5])]
    }

    fn window_time(&mut self, lo: f64, hi: f64) -> f64 {
        let c = self.centers_in(lo, hi);
        if c.is_empty() {
            return f64::NAN;
        }
        c[self.branch(&vec![1.0 / c.len() as f64; c.len()])]
    }

    fn window_time_ln_density(&self, lo: f64, hi: f64, t: f64) -> f64 {
        let c = self.centers_in(lo, hi);
        if c.iter().any(|&x| (x - t).abs() < 1e-9 * self.grid.h) {
            -(c.len() as f64).ln() - self.grid.h.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn prior_mark(&mut self, _hp: &Hyperparams) -> f64 {
        let probs = self.mark_probs.clone();
        self.grid.mark(self.branch(&probs))
    }

    fn prior_mark_ln_density(&self, _hp: &Hyperparams, m: f64) -> f64 {
        for j in 0..self.grid.n_marks {
            let q = self.grid.mark(j);
            if ((m - q) / q).abs() < 1e-9 {
                return (self.mark_probs[j] / (q * self.grid.mark_tau)).ln();
            }
        }
        f64::NEG_INFINITY
    }

    fn accept(&mut self, log_alpha: f64) -> bool {
        let a = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
        if a >= 1.0 {
            true
        } else if a <= 0.0 {
            false
        } else {
            self.branch(&[a, 1.0 - a]) == 0
        }
    }
}

/// Exact transition matrix (sparse rows) of `step` over `states`.
pub fn transition_matrix<F>(grid: &Grid, hp: &Hyperparams, states: &[Key], mut step: F) -> Vec<HashMap<usize, f64>>
where
    F: FnMut(&mut Particle, &mut EnumDraws),
{
    let index: HashMap<&Key, usize> = states.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut rows = Vec::with_capacity(states.len());
    for key in states {
        let start = grid.particle(key);
        let mut row: HashMap<usize, f64> = HashMap::new();
        let mut d = EnumDraws::new(grid, hp);
        loop {
            let mut p = start.clone();
            step(&mut p, &mut d);
            let k = grid.key(&p).expect("move left the grid");
            let j = *index.get(&k).unwrap_or_else(|| panic!("move left the state space: {k:?} from {key:?}"));
            *row.entry(j).or_insert(0.0) += d.prob;
            if !d.advance() {
                break;
            }
        }
        let total: f64 = row.values().sum();
        assert!((total - 1.0).abs() < 1e-12, "row sums to {total}");
        rows.push(row);
    }
    rows
}

/// Normalized grid law: target times cell volume.
pub fn stationary_target<T: SweepTarget>(target: &T, grid: &Grid, states: &[Key]) -> Vec<f64> {
    let lp: Vec<f64> = states
        .iter()
        .map(|k| {
            let p = grid.particle(k);
            target.log_density(&p) + grid.ln_volume(&p)
        })
        .collect();
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn assert_detailed_balance(pi: &[f64], rows: &[HashMap<usize, f64>], tol: f64) {
    for (i, row) in rows.iter().enumerate() {
        for (&j, &kij) in row {
            let kji = rows[j].get(&i).copied().unwrap_or(0.0);
            let a = pi[i] * kij;
            let b = pi[j] * kji;
            assert!(
                (a - b).abs() <= tol * a.max(b) + 1e-300,
                "balance fails between {i} and {j}: {a} vs {b}"
            );
        }
    }
}

pub fn assert_stationary(pi: &[f64], rows: &[HashMap<usize, f64>], tol: f64) {
    let mut out = vec![0.0; pi.len()];
    for (i, row) in rows.iter().enumerate() {
        for (&j, &k) in row {
            out[j] += pi[i] * k;
        }
    }
    for (j, (&a, &b)) in out.iter().zip(pi).enumerate() {
        assert!((a - b).abs() <= tol * b.max(1e-300) + 1e-300 || (a - b).abs() < 1e-15, "state {j}: {a} vs {b}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{single_move, ModelTarget, MoveKind, MoveMix, SweepWindow};
    use crate::model::{ModelContext, TargetFlavor, TickData};

    fn setup() -> (Grid, Hyperparams, TickData, MoveMix) {
        let grid = Grid {
            h: 0.01,
            cells: 4,
            mark0: 500.0,
            mark_tau: 0.5,
            n_marks: 3,
            mu_step: 1e-4,
            n_mu: 1,
            sigma0: 2e-4,
            sigma_tau: 0.3,
            n_sigma: 3,
            max_jumps: 2,
        };
        let hp = Hyperparams {
            nu: 50.0,
            horizon: 0.04,
            ..Hyperparams::default()
        };
        let data = TickData::new(
            vec![0.003, 0.008, 0.012, 0.0155, 0.021, 0.026, 0.03, 0.033, 0.037],
            vec![1e-4, -2e-4, 3e-4, 0.0, -1e-4, 2e-4, 5e-5, -3e-4, 1e-4],
        )
        .unwrap();
        let mix = MoveMix {
            shift_frac: grid.h * hp.nu,
            mark_log_scale: grid.mark_tau,
            mu_scale: grid.mu_step,
            sigma_log_scale: grid.sigma_tau,
            moves_per_sweep: 1,
            ..MoveMix::default()
        };
        (grid, hp, data, mix)
    }

    fn check(win: SweepWindow, flavor: TargetFlavor) {
        let (grid, hp, data, mut mix) = setup();
        mix.window_limit = win.limit;
        let ctx = ModelContext::new(&data, &hp);
        let inner = ModelTarget::new(&ctx, &flavor);
        let target = DiscreteTarget { inner: &inner, grid: &grid };
        let states = grid.states();
        let pi = stationary_target(&target, &grid, &states);
        let mut mixture = vec![HashMap::new(); states.len()];
        // Birth and death are reversible only as a pair.
        let groups: [&[MoveKind]; 5] = [
            &[MoveKind::Birth, MoveKind::Death],
            &[MoveKind::Shift],
            &[MoveKind::Mark],
            &[MoveKind::Mu],
            &[MoveKind::Sigma],
        ];
        for group in groups {
            let total: f64 = group.iter().map(|&k| mix.prob(k)).sum();
            let mut rows = vec![HashMap::new(); states.len()];
            for &kind in group {
                let part = transition_matrix(&grid, &hp, &states, |p, d| {
                    single_move(kind, p, &target, &mix, &win, d);
                });
                for (i, row) in part.iter().enumerate() {
                    for (&j, &k) in row {
                        *rows[i].entry(j).or_insert(0.0) += mix.prob(kind) / total * k;
                        *mixture[i].entry(j).or_insert(0.0) += mix.prob(kind) * k;
                    }
                }
            }
            assert_detailed_balance(&pi, &rows, 1e-10);
        }
        assert_stationary(&pi, &mixture, 1e-8);
        // The sweep itself, move choice included.
        let rows = transition_matrix(&grid, &hp, &states, |p, d| {
            crate::kernels::sweep_unchecked(p, &target, &mix, &win, 1, d);
        });
        assert_stationary(&pi, &rows, 1e-8);
    }

    #[test]
    fn moves_balance_on_full_window() {
        check(SweepWindow::new(0.0, 0.04, None), TargetFlavor::Windowed { t: 0.04 });
    }

    #[test]
    fn moves_balance_with_jump_limit() {
        check(SweepWindow::new(0.0, 0.04, Some(1)), TargetFlavor::Windowed { t: 0.04 });
    }

    #[test]
    fn moves_balance_on_a_sub_window() {
        check(SweepWindow::new(0.01, 0.04, None), TargetFlavor::Windowed { t: 0.04 });
        check(SweepWindow::new(0.0, 0.03, Some(1)), TargetFlavor::Saturated { t: 0.03 });
    }

    #[test]
    fn moves_balance_on_partial_data() {
        check(
            SweepWindow::new(0.0, 0.04, None),
            TargetFlavor::Tempered {
                n_data: 5,
                t_seg: 0.04,
                survival_to: 0.02,
            },
        );
    }
}
