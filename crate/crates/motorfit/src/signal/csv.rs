//! CSV ingestion: the native three-column interchange format, a tolerant
//! scope-export reader, and the multi-channel record format produced by the
//! preprocessing pipeline.

use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{SyncedRecord, Trace};

/// Minimum number of data rows for a usable trace file.
const MIN_ROWS: usize = 16;
/// Allowed timestamp deviation from the uniform grid, as a fraction of dt.
const UNIFORMITY_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvFormat {
    /// `t,input,signal` rows, optional `t,input,<name>` header.
    Native,
    /// Scope export: rows whose last three cells parse as floats are data,
    /// everything else (metadata rows, leading columns, blank cells) is
    /// skipped.
    Scope,
}

/// A parsed single-signal measurement file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    /// Channel name from the header, when one was present.
    pub name: Option<String>,
    pub input: Trace,
    pub signal: Trace,
}

/// Reads one measurement file in the given format.
pub fn load_trace_csv(path: &Path, format: CsvFormat) -> Result<LoadedTrace> {
    let text = std::fs::read_to_string(path)?;
    match format {
        CsvFormat::Native => parse_native_csv(&text),
        CsvFormat::Scope => parse_scope_csv(&text),
    }
}

/// Parses the native format: an optional header line `t,input,<name>`, then
/// `t,input,signal` float rows. LF and CRLF both accepted.
pub fn parse_native_csv(text: &str) -> Result<LoadedTrace> {
    let mut name = None;
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 columns, got {}",
                lineno + 1,
                cells.len()
            )));
        }
        match parse_row3(&cells) {
            Some(row) => rows.push(row),
            None if rows.is_empty() && name.is_none() => {
                // Header row: keep the signal column label.
                name = Some(cells[2].to_string());
            }
            None => {
                return Err(Error::Parse(format!(
                    "line {}: non-numeric cell in data row",
                    lineno + 1
                )));
            }
        }
    }
    let (input, signal) = assemble(rows)?;
    Ok(LoadedTrace {
        name,
        input,
        signal,
    })
}

/// Parses a scope export. A row is data when, after trimming trailing blank
/// cells, its last three cells parse as floats (time, input, signal); all
/// other rows are skipped.
pub fn parse_scope_csv(text: &str) -> Result<LoadedTrace> {
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for raw in text.lines() {
        let mut cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        while cells.last().is_some_and(|c| c.is_empty()) {
            cells.pop();
        }
        if cells.len() < 3 {
            continue;
        }
        if let Some(row) = parse_row3(&cells[cells.len() - 3..]) {
            rows.push(row);
        }
    }
    let (input, signal) = assemble(rows)?;
    Ok(LoadedTrace {
        name: None,
        input,
        signal,
    })
}

fn parse_row3(cells: &[&str]) -> Option<[f64; 3]> {
    let mut out = [0.0; 3];
    for (o, c) in out.iter_mut().zip(cells) {
        let v: f64 = c.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        *o = v;
    }
    Some(out)
}

/// Infers dt as the median timestamp delta and enforces grid uniformity.
fn assemble(rows: Vec<[f64; 3]>) -> Result<(Trace, Trace)> {
    if rows.len() < MIN_ROWS {
        return Err(Error::TraceTooShort(format!(
            "{} data rows, need at least {MIN_ROWS}",
            rows.len()
        )));
    }
    let mut deltas: Vec<f64> = rows.windows(2).map(|w| w[1][0] - w[0][0]).collect();
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = deltas[deltas.len() / 2];
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(Error::NonUniformSampling(format!(
            "median timestamp delta {dt} is not a positive sample period"
        )));
    }
    let t0 = rows[0][0];
    for (k, row) in rows.iter().enumerate() {
        let expected = t0 + k as f64 * dt;
        if (row[0] - expected).abs() > UNIFORMITY_TOL * dt {
            return Err(Error::NonUniformSampling(format!(
                "row {} at t = {} deviates from the uniform grid (expected {})",
                k + 1,
                row[0],
                expected
            )));
        }
    }
    let input = Trace::new(t0, dt, rows.iter().map(|r| r[1]).collect());
    let signal = Trace::new(t0, dt, rows.iter().map(|r| r[2]).collect());
    Ok((input, signal))
}

/// Parses a preprocessed multi-channel record: a required header line
/// `t,input,<name>[,<name>...]` followed by float rows.
pub fn parse_record_csv(text: &str) -> Result<SyncedRecord> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty record file".into()))?;
    let names: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if names.len() < 3 || names[0] != "t" || names[1] != "input" {
        return Err(Error::Parse(
            "record header must be 't,input,<channel>[,...]'".into(),
        ));
    }
    let width = names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in lines {
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(Error::Parse(format!(
                "line {}: expected {} columns, got {}",
                lineno + 1,
                width,
                cells.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for c in cells {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number '{c}'", lineno + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "line {}: non-finite value '{c}'",
                    lineno + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::TraceTooShort(
            "record needs at least 2 data rows".into(),
        ));
    }
    let mut deltas: Vec<f64> = rows.windows(2).map(|w| w[1][0] - w[0][0]).collect();
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = deltas[deltas.len() / 2];
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(Error::NonUniformSampling(
            "record timestamps are not increasing".into(),
        ));
    }
    let t0 = rows[0][0];
    for (k, row) in rows.iter().enumerate() {
        if (row[0] - (t0 + k as f64 * dt)).abs() > UNIFORMITY_TOL * dt {
            return Err(Error::NonUniformSampling(format!(
                "record row {} off the uniform grid",
                k + 1
            )));
        }
    }
    let column = |j: usize| -> Trace { Trace::new(t0, dt, rows.iter().map(|r| r[j]).collect()) };
    let input = column(1);
    let channels = names
        .iter()
        .enumerate()
        .skip(2)
        .map(|(j, n)| (n.clone(), column(j)))
        .collect();
    SyncedRecord::new(input, channels)
}

/// Serializes a record with a `t,input,...` header. Floats print in
/// shortest round-trip form, so identical records yield identical bytes.
pub fn write_record_csv(record: &SyncedRecord) -> String {
    let mut out = String::from("t,input");
    for (name, _) in &record.channels {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..record.len() {
        out.push_str(&record.input.time_at(k).to_string());
        out.push(',');
        out.push_str(&record.input.samples[k].to_string());
        for (_, tr) in &record.channels {
            out.push(',');
            out.push_str(&tr.samples[k].to_string());
        }
        out.push('\n');
    }
    out
}
