//! Record-per-line JSON files shared by the raw, clean, prediction and catalog stores.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A line that could not be decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Records decoded from a store together with the lines that were skipped.
#[derive(Debug, Clone)]
pub struct ReadOutcome<T> {
    pub records: Vec<T>,
    pub skipped: Vec<LineError>,
}

pub fn encode_line<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("store records serialize");
    line.push('\n');
    line
}

pub fn decode_str<T: DeserializeOwned>(text: &str) -> ReadOutcome<T> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(rec) => records.push(rec),
            Err(e) => skipped.push(LineError { line: idx + 1, message: e.to_string() }),
        }
    }
    ReadOutcome { records, skipped }
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> std::io::Result<ReadOutcome<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => records.push(rec),
            Err(e) => skipped.push(LineError { line: idx + 1, message: e.to_string() }),
        }
    }
    Ok(ReadOutcome { records, skipped })
}

/// Replaces `path` with exactly `records`.
pub fn write_file<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> std::io::Result<usize> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for rec in records {
        out.write_all(encode_line(rec).as_bytes())?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

/// Appends records; each record is written with a single `write_all` of a full line.
pub fn append_file<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> std::io::Result<usize> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut n = 0;
    for rec in records {
        file.write_all(encode_line(rec).as_bytes())?;
        n += 1;
    }
    file.flush()?;
    Ok(n)
}
