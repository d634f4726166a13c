//! Raw-stream and label file formats.
//!
//! Raw load: CSV with header `timestamp_s,load_kg`, or JSON lines of
//! `{"t": <seconds>, "load": <kg>}`. Labels: CSV `start_s,end_s,label` with
//! `label` one of `transition` or `non_active`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Label, LabelInterval, RawStream, SignalError};

#[derive(Debug, Serialize, Deserialize)]
struct CsvSample {
    timestamp_s: f64,
    load_kg: f64,
}

#[derive(Debug, Deserialize)]
struct JsonSample {
    t: f64,
    load: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvLabel {
    start_s: f64,
    end_s: f64,
    label: String,
}

fn parse_err(line: usize, msg: impl ToString) -> SignalError {
    SignalError::Parse { line, msg: msg.to_string() }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

pub fn read_raw_csv<R: Read>(reader: R, sample_rate_hz: f64) -> Result<RawStream, SignalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp_s", "load_kg"] {
        return Err(parse_err(1, format!("expected header timestamp_s,load_kg, got {:?}", headers)));
    }
    let (mut ts, mut load) = (Vec::new(), Vec::new());
    for row in rdr.deserialize::<CsvSample>() {
        let s = row.map_err(|e| parse_err(csv_line(&e), e))?;
        ts.push(s.timestamp_s);
        load.push(s.load_kg);
    }
    RawStream::new(sample_rate_hz, ts, load)
}

pub fn read_raw_jsonl<R: BufRead>(reader: R, sample_rate_hz: f64) -> Result<RawStream, SignalError> {
    let (mut ts, mut load) = (Vec::new(), Vec::new());
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: JsonSample = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
        ts.push(s.t);
        load.push(s.load);
    }
    RawStream::new(sample_rate_hz, ts, load)
}

/// Reads either raw format, choosing JSON lines when the first non-blank
/// character is `{`.
pub fn read_raw<R: Read>(mut reader: R, sample_rate_hz: f64) -> Result<RawStream, SignalError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| parse_err(0, e))?;
    if text.trim_start().starts_with('{') {
        read_raw_jsonl(text.as_bytes(), sample_rate_hz)
    } else {
        read_raw_csv(text.as_bytes(), sample_rate_hz)
    }
}

pub fn write_raw_csv<W: Write>(writer: W, raw: &RawStream) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (&timestamp_s, &load_kg) in raw.timestamps().iter().zip(raw.load()) {
        w.serialize(CsvSample { timestamp_s, load_kg })?;
    }
    w.flush()
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<LabelInterval>, SignalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvLabel>() {
        let row = row.map_err(|e| parse_err(csv_line(&e), e))?;
        let line = out.len() + 2;
        let label: Label = row.label.parse().map_err(|e| parse_err(line, e))?;
        if label.target().is_none() {
            return Err(parse_err(line, format!("label {label} is not an annotation class")));
        }
        if !(row.start_s.is_finite() && row.end_s.is_finite() && row.start_s <= row.end_s) {
            return Err(parse_err(line, format!("bad interval {}..{}", row.start_s, row.end_s)));
        }
        out.push(LabelInterval { start_s: row.start_s, end_s: row.end_s, label });
    }
    Ok(out)
}

/// Writes the annotation-class intervals; exit and empty spans are skipped.
pub fn write_labels<W: Write>(writer: W, intervals: &[LabelInterval]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for iv in intervals.iter().filter(|iv| iv.label.target().is_some()) {
        w.serialize(CsvLabel { start_s: iv.start_s, end_s: iv.end_s, label: iv.label.to_string() })?;
    }
    w.flush()
}
