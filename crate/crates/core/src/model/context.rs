use super::density::{integrated_unchecked, intensity_unchecked, log_pp_prior_unchecked};
use super::{log_static_prior, Hyperparams, MarkedPP, Particle, StaticParams, TickData};
use super::TargetFlavor;

/// Number of likelihood ratios multiplied together before taking a log.
/// Ratios stay within a few orders of magnitude of one, so 16 of them
/// cannot leave the normal f64 range.
const LOG_CHUNK: usize = 16;

/// Data-bound evaluator used on hot paths.
///
/// Holds the tick-to-tick decay factors `exp(-s·(ω_{i+1} - ω_i))` so that
/// walking the intensity along the ticks costs one multiply per tick plus
/// one `exp` per latent jump crossed.
#[derive(Debug, Clone)]
pub struct ModelContext<'a> {
    pub data: &'a TickData,
    pub hp: &'a Hyperparams,
    decay: Vec<f64>,
    /// `bucket_first[b]` is the number of ticks before `b · bucket_width`.
    bucket_first: Vec<usize>,
    bucket_width: f64,
}

/// Walks λ along the ticks of a data set for one latent process.
struct Cursor<'p> {
    times: &'p [f64],
    marks: &'p [f64],
    next: usize,
    lambda: f64,
}

impl<'p> Cursor<'p> {
    fn start(times: &'p [f64], marks: &'p [f64], hp: &Hyperparams, t0: f64) -> Self {
        Self {
            times,
            marks,
            next: times.partition_point(|&p| p <= t0),
            lambda: intensity_unchecked(times, marks, hp, t0),
        }
    }

    #[inline]
    fn advance(&mut self, t: f64, decay: f64, s: f64) -> f64 {
        self.lambda *= decay;
        while self.next < self.times.len() && self.times[self.next] <= t {
            self.lambda += self.marks[self.next] * (-s * (t - self.times[self.next])).exp();
            self.next += 1;
        }
        self.lambda
    }
}

/// A single-jump modification of a latent process.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JumpChange {
    pub removed: Option<(f64, f64)>,
    pub added: Option<(f64, f64)>,
}

impl JumpChange {
    fn earliest(&self) -> f64 {
        let a = self.removed.map_or(f64::INFINITY, |(t, _)| t);
        let b = self.added.map_or(f64::INFINITY, |(t, _)| t);
        a.min(b)
    }
}

struct LogAccumulator {
    acc: f64,
    prod: f64,
    count: usize,
}

impl LogAccumulator {
    fn new() -> Self {
        Self {
            acc: 0.0,
            prod: 1.0,
            count: 0,
        }
    }

    #[inline]
    fn push(&mut self, ratio: f64) {
        self.prod *= ratio;
        self.count += 1;
        if self.count == LOG_CHUNK {
            self.acc += self.prod.ln();
            self.prod = 1.0;
            self.count = 0;
        }
    }

    fn finish(self) -> f64 {
        self.acc + self.prod.ln()
    }
}

impl<'a> ModelContext<'a> {
    pub fn new(data: &'a TickData, hp: &'a Hyperparams) -> Self {
        let decay = data
            .times()
            .windows(2)
            .map(|w| (-hp.s * (w[1] - w[0])).exp())
            .collect();
        let w = data.times();
        let (bucket_first, bucket_width) = match w.last() {
            Some(&last) => {
                let n = 2 * w.len();
                let h = last / n as f64;
                let first = (0..=n + 1).map(|b| w.partition_point(|&x| x < b as f64 * h)).collect();
                (first, h)
            }
            None => (vec![0], 1.0),
        };
        Self {
            data,
            hp,
            decay,
            bucket_first,
            bucket_width,
        }
    }

    pub fn intensity(&self, pp: &MarkedPP, t: f64) -> f64 {
        intensity_unchecked(pp.times(), pp.marks(), self.hp, t)
    }

    pub fn integral(&self, pp: &MarkedPP, a: f64, b: f64) -> f64 {
        integrated_unchecked(pp.times(), pp.marks(), self.hp, a, b)
    }

    pub fn intensity_at_tick(&self, pp: &MarkedPP, i: usize) -> f64 {
        self.intensity(pp, self.data.times()[i])
    }

    /// Σ log λ(ω_i) over ticks `lo..hi`.
    pub fn sum_log_intensity(&self, pp: &MarkedPP, lo: usize, hi: usize) -> f64 {
        if lo >= hi {
            return 0.0;
        }
        let w = self.data.times();
        let mut cur = Cursor::start(pp.times(), pp.marks(), self.hp, w[lo]);
        let mut acc = LogAccumulator::new();
        acc.push(cur.lambda);
        for i in lo + 1..hi {
            acc.push(cur.advance(w[i], self.decay[i - 1], self.hp.s));
        }
        // Intensities are not near one; fall back to plain logs if the
        // running product left the f64 range.
        let chunked = acc.finish();
        if chunked.is_finite() {
            chunked
        } else {
            let mut cur = Cursor::start(pp.times(), pp.marks(), self.hp, w[lo]);
            let mut total = cur.lambda.ln();
            for i in lo + 1..hi {
                total += cur.advance(w[i], self.decay[i - 1], self.hp.s).ln();
            }
            total
        }
    }

    pub fn cauchy_sum(&self, sp: &StaticParams, lo: usize, hi: usize) -> f64 {
        let xi = &self.data.log_returns()[lo..hi];
        let mut acc = LogAccumulator::new();
        for &x in xi {
            let z = (x - sp.mu) / sp.sigma;
            acc.push(z.mul_add(z, 1.0));
        }
        -(xi.len() as f64) * (std::f64::consts::PI * sp.sigma).ln() - acc.finish()
    }

    /// Log-likelihood of the first `n_ticks` ticks with survival over `[0, lik_end]`.
    pub fn log_lik(&self, p: &Particle, n_ticks: usize, lik_end: f64) -> f64 {
        self.sum_log_intensity(&p.pp, 0, n_ticks) + self.cauchy_sum(&p.sp, 0, n_ticks)
            - self.integral(&p.pp, 0.0, lik_end)
    }

    /// Log-likelihood of the ticks in `(a, b]` with survival over `[a, b]`.
    pub fn log_lik_interval(&self, p: &Particle, a: f64, b: f64) -> f64 {
        let lo = self.data.count_upto(a);
        let hi = self.data.count_upto(b);
        self.sum_log_intensity(&p.pp, lo, hi) + self.cauchy_sum(&p.sp, lo, hi)
            - self.integral(&p.pp, a, b)
    }

    /// Log-likelihood change when `from` becomes `to` through `change`,
    /// over the first `n_ticks` ticks and survival to `lik_end`.
    pub fn jump_log_lik_ratio(
        &self,
        from: &MarkedPP,
        to: &MarkedPP,
        change: &JumpChange,
        n_ticks: usize,
        lik_end: f64,
    ) -> f64 {
        self.jump_log_lik_ratio_scaled(from, to, change, n_ticks, lik_end, 1.0)
    }

    /// As [`Self::jump_log_lik_ratio`] with the survival term multiplied by
    /// `survival_scale`.
    pub fn jump_log_lik_ratio_scaled(
        &self,
        from: &MarkedPP,
        to: &MarkedPP,
        change: &JumpChange,
        n_ticks: usize,
        lik_end: f64,
        survival_scale: f64,
    ) -> f64 {
        let s = self.hp.s;
        let jump_integral = |(t, m): (f64, f64)| {
            if t < lik_end {
                m * (1.0 - (-s * (lik_end - t)).exp()) / s
            } else {
                0.0
            }
        };
        let mut delta = survival_scale
            * (change.removed.map_or(0.0, jump_integral) - change.added.map_or(0.0, jump_integral));

        // Between consecutive jump times of either process both intensities
        // decay at rate s, so their ratio is constant on each such segment.
        let start = change.earliest();
        let mut lo = self.ticks_before(start, n_ticks);
        if lo < n_ticks {
            let (ft, fm) = (from.times(), from.marks());
            let mut la = self.intensity(from, start);
            // Jumps before `start` are shared; only a change at `start` differs.
            let mut lb = la;
            if let Some((_, m)) = change.removed.filter(|&(t, _)| t == start) {
                lb -= m;
            }
            if let Some((_, m)) = change.added.filter(|&(t, _)| t == start) {
                lb += m;
            }
            if !(lb > 0.0) {
                lb = self.intensity(to, start);
            }
            let mut j = ft.partition_point(|&p| p <= start);
            let mut added = change.added.filter(|&(t, _)| t > start);
            let removed_t = change.removed.map(|(t, _)| t);
            let mut b = start;
            loop {
                let next_from = ft.get(j).copied().unwrap_or(f64::INFINITY);
                let next_add = added.map_or(f64::INFINITY, |(t, _)| t);
                let e = next_from.min(next_add);
                let hi = if e.is_finite() { self.ticks_before(e, n_ticks) } else { n_ticks };
                if hi > lo {
                    delta += (hi - lo) as f64 * (lb / la).ln();
                }
                lo = hi;
                if lo >= n_ticks {
                    break;
                }
                let f = (-s * (e - b)).exp();
                la *= f;
                lb *= f;
                if next_from == e {
                    la += fm[j];
                    if removed_t != Some(e) {
                        lb += fm[j];
                    }
                    j += 1;
                }
                if next_add == e {
                    lb += added.take().map_or(0.0, |(_, m)| m);
                }
                b = e;
            }
        }
        delta
    }

    /// Number of ticks among the first `cap` with time `< t`.
    fn ticks_before(&self, t: f64, cap: usize) -> usize {
        let w = self.data.times();
        if !(t > 0.0) {
            return 0;
        }
        let h = self.bucket_width;
        let mut b = (t / h).floor() as usize;
        if b >= self.bucket_first.len() {
            return cap;
        }
        if b as f64 * h > t {
            b -= 1;
        }
        let mut i = self.bucket_first[b];
        while i < cap && w[i] < t {
            i += 1;
        }
        i.min(cap)
    }

    /// Change in the summed Cauchy log density over the first `n_ticks` ticks.
    pub fn cauchy_log_ratio(&self, from: &StaticParams, to: &StaticParams, n_ticks: usize) -> f64 {
        // (1 + za²)/(1 + zb²) = (σa² + da²)/(σb² + db²) · σb²/σa²
        let xi = &self.data.log_returns()[..n_ticks];
        let (sa2, sb2) = (from.sigma * from.sigma, to.sigma * to.sigma);
        let (mut pa, mut pb, mut acc, mut count) = (1.0f64, 1.0f64, 0.0, 0);
        let mut ok = true;
        for &x in xi {
            let da = x - from.mu;
            let db = x - to.mu;
            pa *= da.mul_add(da, sa2);
            pb *= db.mul_add(db, sb2);
            count += 1;
            if count == LOG_CHUNK {
                ok &= pa.is_normal() && pb.is_normal();
                acc += (pa / pb).ln();
                pa = 1.0;
                pb = 1.0;
                count = 0;
            }
        }
        ok &= pa.is_normal() && pb.is_normal();
        acc += (pa / pb).ln();
        if !(ok && acc.is_finite()) {
            acc = xi
                .iter()
                .map(|&x| {
                    let (da, db) = (x - from.mu, x - to.mu);
                    da.mul_add(da, sa2).ln() - db.mul_add(db, sb2).ln()
                })
                .sum();
        }
        (n_ticks as f64) * (to.sigma / from.sigma).ln() + acc
    }

    /// Fast unnormalized log target. The caller guarantees the process window
    /// matches the flavor.
    pub fn log_target(&self, p: &Particle, flavor: &TargetFlavor) -> f64 {
        let n = flavor.n_ticks(self.data);
        self.log_lik(p, n, flavor.lik_end())
            + log_pp_prior_unchecked(p.pp.marks(), self.hp, flavor.window_end(self.hp))
            + log_static_prior(&p.sp, self.hp)
    }
}
