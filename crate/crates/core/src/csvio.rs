//! Scan CSV files.
//!
//! ```text
//! # seed=1 preset=sample1 trace=hom integration_s=0.5 variable=delay_um
//! sweep_value,expected_rate,counts,sigma
//! -800,4050,2031,45.066617356974576
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting; lines end in LF.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::experiments::{ScanResult, ScanVariable};

pub const HEADER: &str = "sweep_value,expected_rate,counts,sigma";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

/// Values recorded on the `#` metadata line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metadata {
    pub entries: BTreeMap<String, String>,
}

impl Metadata {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

pub fn write_scan(scan: &ScanResult, seed: u64, preset: &str, trace: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# seed={seed} preset={preset} trace={trace} integration_s={} variable={}",
        scan.integration_time_s, scan.variable
    );
    out.push_str(HEADER);
    out.push('\n');
    for i in 0..scan.points.len() {
        let _ = writeln!(out, "{},{},{},{}", scan.points[i], scan.expected_rate[i], scan.counts[i], scan.sigma[i]);
    }
    out
}

fn err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError { line, message: message.into() }
}

/// Reads a scan CSV. Missing `integration_s`/`variable` metadata default to
/// 1 s and `delay_um`.
pub fn read_scan(text: &str) -> Result<(ScanResult, Metadata), CsvError> {
    let mut meta = Metadata::default();
    let mut header_seen = false;
    let mut points = Vec::new();
    let mut rates = Vec::new();
    let mut counts = Vec::new();
    let mut sigma = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim_end_matches('\r').trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    meta.entries.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = t.split(',').map(str::trim).collect();
            if cols.join(",") != HEADER {
                return Err(err(line, format!("expected header `{HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(line, format!("expected 4 columns, found {}", fields.len())));
        }
        let mut row = [0.0; 4];
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(line, format!("not a number: `{f}`")))?;
        }
        if row[2] < 0.0 || row[3] <= 0.0 {
            return Err(err(line, "counts must be non-negative and sigma positive"));
        }
        points.push(row[0]);
        rates.push(row[1]);
        counts.push(row[2]);
        sigma.push(row[3]);
    }
    if !header_seen {
        return Err(err(0, "missing header row"));
    }
    if points.is_empty() {
        return Err(err(0, "no data rows"));
    }
    let integration_time_s = match meta.get("integration_s") {
        Some(v) => v.parse::<f64>().ok().filter(|x| *x > 0.0).ok_or_else(|| err(1, format!("bad integration_s `{v}`")))?,
        None => 1.0,
    };
    let variable = match meta.get("variable") {
        Some(v) => v.parse::<ScanVariable>().map_err(|e| err(1, e))?,
        None => ScanVariable::DelayUm,
    };
    Ok((ScanResult { variable, points, expected_rate: rates, counts, sigma, integration_time_s }, meta))
}
