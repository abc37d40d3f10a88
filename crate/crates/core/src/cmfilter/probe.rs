use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_cm_filter, CmConfig};
use crate::error::{invalid, Result};
use crate::model::{Hyperparams, StaticParams, TickData};
use crate::rng::{stream, Purpose};
use crate::samplers::{run_saturated, Flavor, SamplerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub method: String,
    pub dispersion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub repetitions: usize,
    /// Set when there are too few repetitions for a spread.
    pub degenerate: bool,
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    /// CSV with columns `n,method,dispersion`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,method,dispersion")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:.16e}", r.n, r.method, r.dispersion)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dispersions(&self, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.method == method).map(|r| r.dispersion).collect()
    }
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Spread across repetitions of the estimated mean intensity over
/// `[0, t_n]`, for the bank filter (`N` stored states) and the saturated
/// sampler at matched cost (`N` particles, one iterate per step), both with
/// (μ, σ) held at `sp`. Uses the first `horizon_steps` times of `times`.
pub fn error_growth_probe(
    data: &TickData,
    times: &[f64],
    hp: &Hyperparams,
    sp: StaticParams,
    repetitions: usize,
    horizon_steps: usize,
    n: usize,
    seed: u64,
) -> Result<ProbeTable> {
    if repetitions == 0 {
        return Err(invalid("repetitions", "need at least one repetition"));
    }
    if horizon_steps == 0 || horizon_steps > times.len() {
        return Err(invalid("horizon_steps", format!("must lie in 1..={}", times.len())));
    }
    let times = &times[..horizon_steps];
    let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let rep_seed: u64 = stream(seed, 0, r as u64, Purpose::Probe).random();
            let mut cm = CmConfig::new(n, times.to_vec(), sp, rep_seed);
            cm.hp = hp.clone();
            let cm = run_cm_filter(data, &cm)?;
            let mut sat = SamplerConfig::new(Flavor::Saturated, n.max(2), 1, times.to_vec(), rep_seed);
            sat.hp = hp.clone();
            sat.fixed_static = Some(sp);
            let sat = run_saturated(data, &sat).map_err(|e| e.error)?;
            let f = |s: &[crate::samplers::SegmentSummary]| s.iter().map(|x| x.cumulative_rate_mean).collect();
            Ok((f(&cm.segments), f(&sat.segments)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for k in 0..horizon_steps {
        for (method, pick) in [("cmfilter", 0), ("saturated", 1)] {
            let xs: Vec<f64> = runs.iter().map(|r| if pick == 0 { r.0[k] } else { r.1[k] }).collect();
            rows.push(ProbeRow {
                n: k + 1,
                method: method.to_string(),
                dispersion: sample_sd(&xs),
            });
        }
    }
    Ok(ProbeTable {
        repetitions,
        degenerate: repetitions < 2,
        rows,
    })
}
