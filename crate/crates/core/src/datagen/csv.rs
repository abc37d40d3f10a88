use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TickData;

const HEADER: &str = "time,log_return";

/// Writes `time,log_return` rows with 17 significant digits.
pub fn write_ticks<W: Write>(data: &TickData, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for (t, x) in data.times().iter().zip(data.log_returns()) {
        writeln!(out, "{t:.16e},{x:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ticks<R: Read>(input: R) -> Result<TickData> {
    let reader = BufReader::new(input);
    let mut times = Vec::new();
    let mut returns = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if !saw_header {
            if line != HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected header `{HEADER}`, found `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    reason: format!("{what} `{s}` is not a finite number"),
                })
        };
        let t = num(fields[0], "time")?;
        let x = num(fields[1], "log_return")?;
        let prev = times.last().copied().unwrap_or(0.0);
        if t <= prev {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("time {t} is not strictly after {prev}"),
            });
        }
        times.push(t);
        returns.push(x);
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            reason: format!("missing header `{HEADER}`"),
        });
    }
    TickData::new(times, returns)
}

pub fn save_ticks_csv(data: &TickData, path: &Path) -> Result<()> {
    write_ticks(data, BufWriter::new(File::create(path)?))
}

pub fn load_ticks_csv(path: &Path) -> Result<TickData> {
    read_ticks(File::open(path)?)
}
