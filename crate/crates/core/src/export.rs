//! JSON-lines and CSV metric export.
//!
//! JSON-lines: one record per (seed, round) with the full per-client vector.
//! CSV: `seed,round,mean_acc,upload,broadcast`, reals printed with six
//! significant digits.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runner::{ClientInversion, RunSummary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub seed: u64,
    pub round: usize,
    pub mean_acc: f64,
    pub per_client_acc: Vec<Option<f64>>,
    pub upload_scalars: u64,
    pub broadcast_scalars: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    pub round: usize,
    pub mean_acc: f64,
    pub upload: u64,
    pub broadcast: u64,
}

pub fn records(summary: &RunSummary) -> Vec<RoundRecord> {
    summary
        .seeds
        .iter()
        .flat_map(|s| {
            s.trace.iter().map(move |m| RoundRecord {
                seed: s.seed,
                round: m.round,
                mean_acc: m.mean_acc,
                per_client_acc: m.per_client_acc.clone(),
                upload_scalars: m.upload_scalars,
                broadcast_scalars: m.broadcast_scalars,
            })
        })
        .collect()
}

/// Formats like C's `%.6g`.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').expect("exponent present");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn export(summary: &RunSummary, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Jsonl => write_jsonl(&records(summary), path, false),
        Format::Csv => write_csv(summary, path),
    }
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path, append: bool) -> Result<()> {
    let file = if append {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?
    } else {
        File::create(path).map_err(|e| Error::io(path, e))?
    };
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Parse {
            path: path.into(),
            msg: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends inversion results, tagged with their target kind, to a JSON-lines
/// file.
pub fn append_inversions(items: &[ClientInversion], path: &Path) -> Result<()> {
    write_jsonl(items, path, true)
}

fn write_csv(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "seed,round,mean_acc,upload,broadcast").map_err(io)?;
    for r in records(summary) {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.seed,
            r.round,
            sig6(r.mean_acc),
            r.upload_scalars,
            r.broadcast_scalars
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_csv_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: path.into(),
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.into(),
                msg: e.to_string(),
            })
        })
        .collect()
}
