//! Output files of the batch commands and their readers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::error::{Error, Result};
use crate::samplers::{GridPoint, StepKind, StepRecord};

pub const MANIFEST: &str = "manifest.json";
pub const TRACE: &str = "trace.csv";
pub const GRID: &str = "grid.csv";
pub const SEGMENTS: &str = "segments.json";
pub const SUMMARY: &str = "summary.json";
pub const REPORT: &str = "report.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: Config,
    /// Input ticks for `run`, output ticks for `generate`.
    pub data_path: PathBuf,
    pub data_sha256: Option<String>,
    /// File names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, data_path: &Path, data_sha256: Option<String>, outputs: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            data_path: data_path.to_path_buf(),
            data_sha256,
            outputs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_trace(records: &[StepRecord], path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "n,segment,kind,ess,resampled,wall_ms")?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{:.16e},{},{:.16e}",
            r.step,
            r.segment,
            r.kind.name(),
            r.ess,
            r.resampled as u8,
            r.wall_ms
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_grid(grid: &[GridPoint], path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "t,segment,filtered,smoothed")?;
    for g in grid {
        let sm = g.smoothed.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(f, "{:.16e},{},{:.16e},{sm}", g.t, g.segment, g.filtered)?;
    }
    f.flush()?;
    Ok(())
}

/// Data rows of a CSV file with the expected header, split on commas.
fn rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != header {
                return Err(Error::Parse {
                    line: 1,
                    reason: format!("{}: expected header `{header}`", path.display()),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if cols.len() != header.split(',').count() {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("{}: wrong number of columns", path.display()),
            });
        }
        out.push((i + 1, cols));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad {what} `{s}`"),
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<StepRecord>> {
    rows(path, "n,segment,kind,ess,resampled,wall_ms")?
        .into_iter()
        .map(|(line, c)| {
            let kind = match c[2].as_str() {
                "extension" => StepKind::Extension,
                "data_add" => StepKind::DataAdd,
                other => {
                    return Err(Error::Parse {
                        line,
                        reason: format!("unknown step kind `{other}`"),
                    })
                }
            };
            Ok(StepRecord {
                step: field(&c[0], line, "step")?,
                segment: field(&c[1], line, "segment")?,
                kind,
                ess: field(&c[3], line, "ess")?,
                resampled: field::<u8>(&c[4], line, "resampled flag")? == 1,
                wall_ms: field(&c[5], line, "wall_ms")?,
            })
        })
        .collect()
}

pub fn read_grid(path: &Path) -> Result<Vec<GridPoint>> {
    rows(path, "t,segment,filtered,smoothed")?
        .into_iter()
        .map(|(line, c)| {
            Ok(GridPoint {
                t: field(&c[0], line, "t")?,
                segment: field(&c[1], line, "segment")?,
                filtered: field(&c[2], line, "filtered")?,
                smoothed: if c[3].is_empty() { None } else { Some(field(&c[3], line, "smoothed")?) },
            })
        })
        .collect()
}
