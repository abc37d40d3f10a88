//! Batch front end: `generate`, `run`, `evaluate` and `compare`.
//!
//! Exit codes: 0 success, 2 bad configuration or input, 3 particle
//! collapse (the partial trace is still written), 1 anything else.
//! `COXSMC_THREADS` sets the number of worker threads.

pub mod config;
pub mod files;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use self::config::Config;
use self::files::*;
use crate::datagen::{load_ticks_csv, save_ticks_csv, simulate_ticks, IntensityProfile};
use crate::error::Error;
use crate::metrics::{rmse_filtered, rmse_smoothed_grid, rmspe, EvalReport, Rmspe};
use crate::samplers::{self, SegmentSummary, SamplerTrace};

#[derive(Debug, Parser)]
#[command(name = "coxsmc", version, about = "SMC inference for shot-noise Cox processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate ticks from an intensity profile.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Tick CSV to write; the profile and manifest go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a sampler on a tick file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a run directory.
    Evaluate {
        /// Directory written by `run`.
        trace_dir: PathBuf,
        /// True intensity profile (JSON); without it only RMSPE is available.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Tick file for RMSPE; defaults to the one in the manifest.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        rmspe_lag: Option<usize>,
        #[arg(long)]
        rmspe_span: Option<usize>,
        /// Predict `1/λ̂` ticks instead of `λ̂` times the interval length.
        #[arg(long)]
        literal_inverse: bool,
        /// Report path; defaults to `report.json` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate several runs on the same data.
    Compare {
        /// Run manifests.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Profile for the RMSE columns; otherwise taken from `report.json`.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Collapse { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Entry point of the binary: sets up the worker pool, then runs.
pub fn main() -> i32 {
    if let Ok(v) = std::env::var("COXSMC_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot set up {n} threads: {e}");
                    return 1;
                }
            }
            _ => {
                eprintln!("error: COXSMC_THREADS must be a positive integer, got `{v}`");
                return 2;
            }
        }
    }
    main_with_args(std::env::args_os())
}

pub fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate { config, out, seed } => cmd_generate(&config, &out, seed),
        Command::Run { config, data, out, seed } => cmd_run(&config, &data, &out, seed),
        Command::Evaluate {
            trace_dir,
            profile,
            data,
            rmspe_lag,
            rmspe_span,
            literal_inverse,
            out,
        } => {
            let rmspe = (rmspe_lag.is_some() || rmspe_span.is_some())
                .then(|| (rmspe_lag.unwrap_or(1), rmspe_span.unwrap_or(1), literal_inverse));
            let report = cmd_evaluate(&trace_dir, profile.as_deref(), data.as_deref(), rmspe)?;
            let path = out.unwrap_or_else(|| trace_dir.join(REPORT));
            save_json(&report, &path)?;
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &report).map_err(Error::from)?;
            writeln!(stdout).map_err(Error::from)?;
            Ok(())
        }
        Command::Compare { manifests, out, profile } => cmd_compare(&manifests, &out, profile.as_deref()),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Profile JSON written next to a generated tick file.
pub fn profile_path(ticks: &Path) -> PathBuf {
    with_suffix(ticks, ".profile.json")
}

pub fn cmd_generate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(config, seed)?;
    let profile = cfg.data.profile()?;
    let sp = cfg.data.static_params()?;
    let data = simulate_ticks(&profile, &sp, cfg.data.horizon, cfg.seed).map_err(|e| input_error(format!("data: {e}")))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    save_ticks_csv(&data, out)?;
    let prof = profile_path(out);
    save_json(&profile, &prof)?;
    let names = [out, &prof].iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    let manifest = RunManifest::new("generate", &cfg, out, Some(sha256_file(out)?), names);
    manifest.save(&with_suffix(out, ".manifest.json"))?;
    eprintln!("{} ticks written to {}", data.len(), out.display());
    Ok(())
}

fn write_run_outputs(trace: &SamplerTrace, out: &Path) -> CliResult<()> {
    write_trace(&trace.records, &out.join(TRACE))?;
    write_grid(&trace.grid, &out.join(GRID))?;
    save_json(&trace.segments, &out.join(SEGMENTS))?;
    let summary = EvalReport::from_records(trace.flavor, trace.rcc, trace.n_particles, trace.mcmc_iterates, trace.seed, &trace.records);
    save_json(&summary, &out.join(SUMMARY))?;
    Ok(())
}

pub fn cmd_run(config: &Path, data_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(config, seed)?;
    let scfg = cfg.sampler_config()?;
    let data = load_ticks_csv(data_path).map_err(|e| input_error(format!("{}: {e}", data_path.display())))?;
    let digest = sha256_file(data_path)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let outputs = [TRACE, GRID, SEGMENTS, SUMMARY].iter().map(|s| s.to_string()).collect();
    RunManifest::new("run", &cfg, data_path, Some(digest), outputs).save(&out.join(MANIFEST))?;
    match samplers::run(&data, &scfg) {
        Ok(trace) => {
            write_run_outputs(&trace, out)?;
            eprintln!(
                "{} steps, resampling rate {:.4}, min ESS {:.1}",
                trace.records.len(),
                trace.resampling_rate(),
                trace.min_ess()
            );
            Ok(())
        }
        Err(e) => {
            if let Some(partial) = &e.partial {
                write_run_outputs(partial, out)?;
            }
            Err(e.error.into())
        }
    }
}

fn load_profile(path: &Path) -> CliResult<IntensityProfile> {
    let p: IntensityProfile = load_json(path)?;
    p.validate().map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok(p)
}

/// Full report for a run directory. `rmspe` is `(lag, span, literal_inverse)`.
pub fn cmd_evaluate(
    dir: &Path,
    profile: Option<&Path>,
    data: Option<&Path>,
    rmspe_args: Option<(usize, usize, bool)>,
) -> CliResult<EvalReport> {
    if profile.is_none() && rmspe_args.is_none() {
        return Err(input_error(
            "no --profile: the RMSE fields need the true intensity. Without a known intensity \
             (real data) only RMSPE is available; ask for it with --rmspe-lag/--rmspe-span",
        ));
    }
    let manifest = RunManifest::load(&dir.join(MANIFEST))?;
    let cfg = manifest.config.sampler_config()?;
    let records = read_trace(&dir.join(TRACE))?;
    let mut report = EvalReport::from_records(cfg.flavor, cfg.rcc, cfg.n_particles, cfg.mcmc_iterates, cfg.seed, &records);
    let segments: Vec<SegmentSummary> = load_json(&dir.join(SEGMENTS))?;
    if let Some(p) = profile {
        let profile = load_profile(p)?;
        let grid = read_grid(&dir.join(GRID))?;
        report.rmse_filtered = Some(rmse_filtered(&segments, &cfg.inference_times, &profile)?);
        report.rmse_smoothed = Some(rmse_smoothed_grid(&grid, &profile)?);
    }
    if let Some((lag, span, literal)) = rmspe_args {
        let path = data.map(Path::to_path_buf).unwrap_or_else(|| manifest.data_path.clone());
        if let Some(expected) = &manifest.data_sha256 {
            if &sha256_file(&path).map_err(|e| input_error(format!("{}: {e}", path.display())))? != expected {
                return Err(input_error(format!("{} is not the data this run used (digest mismatch)", path.display())));
            }
        }
        let ticks = load_ticks_csv(&path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        report.rmspe = Some(Rmspe {
            lag,
            span,
            literal_inverse: literal,
            value: rmspe(&segments, &cfg.inference_times, &ticks, lag, span, literal)?,
        });
    }
    Ok(report)
}

/// One row per run: `flavor,rcc,N,M,rate,min_ess,rmse_f,rmse_s,wall_s`.
pub fn cmd_compare(manifests: &[PathBuf], out: &Path, profile: Option<&Path>) -> CliResult<()> {
    if manifests.len() < 2 {
        return Err(input_error("compare needs at least two manifests"));
    }
    let loaded: Vec<RunManifest> = manifests.iter().map(|m| RunManifest::load(m)).collect::<Result<_, _>>()?;
    if let Some(m) = loaded.iter().find(|m| m.command != "run") {
        return Err(input_error(format!("manifest of a `{}` command, expected `run`", m.command)));
    }
    let first = &loaded[0].data_sha256;
    if let Some((i, _)) = loaded.iter().enumerate().find(|(_, m)| &m.data_sha256 != first) {
        return Err(input_error(format!(
            "{} was run on different data than {} (digest mismatch)",
            manifests[i].display(),
            manifests[0].display()
        )));
    }
    let rows: Vec<String> = manifests
        .par_iter()
        .map(|m| -> CliResult<String> {
            let dir = m.parent().unwrap_or(Path::new("."));
            let summary: EvalReport = load_json(&dir.join(SUMMARY))?;
            let (rf, rs) = match profile {
                Some(p) => {
                    let r = cmd_evaluate(dir, Some(p), None, None)?;
                    (r.rmse_filtered, r.rmse_smoothed)
                }
                None => match load_json::<EvalReport>(&dir.join(REPORT)) {
                    Ok(r) => (r.rmse_filtered, r.rmse_smoothed),
                    Err(_) => (None, None),
                },
            };
            let num = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
            Ok(format!(
                "{},{},{},{},{:.16e},{:.16e},{},{},{:.16e}",
                summary.flavor,
                summary.rcc,
                summary.n_particles,
                summary.mcmc_iterates,
                summary.resampling_rate,
                summary.min_ess,
                num(rf),
                num(rs),
                summary.wall_time_s
            ))
        })
        .collect::<CliResult<_>>()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut text = String::from("flavor,rcc,N,M,rate,min_ess,rmse_f,rmse_s,wall_s\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    std::fs::write(out, text).map_err(Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        assert_eq!(Failure::from(Error::Collapse { step: 4 }).code, 3);
        assert_eq!(Failure::from(Error::Config("x".into())).code, 2);
        assert_eq!(Failure::from(Error::Empty("bank".into())).code, 2);
        assert_eq!(Failure::from(Error::Io(std::io::Error::other("disk"))).code, 1);
        assert_eq!(main_with_args(["coxsmc", "frobnicate"]), 2);
        assert_eq!(main_with_args(["coxsmc", "--help"]), 0);
    }
}
