//! Text cleaning, model-input construction and word-level tokenization.

mod clean;
mod tokenize;
mod vocab;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::RawEvent;
use crate::taxonomy::CategoryId;

pub use clean::clean_text;
pub use tokenize::{detokenize, tokenize, TokenSequence};
pub use vocab::{words, Vocabulary, CLS, NUM_SPECIALS, PAD, SEP, SPECIAL_TOKENS, UNK};

pub const DEFAULT_MAX_CHARS: usize = 1000;
pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum TextprepError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary size {0} leaves no room after the 4 special tokens")]
    VocabTooSmall(usize),
    #[error("vocabulary file line {line} is not a single unique token")]
    VocabFormat { line: usize },
    #[error("max_len {0} is below the minimum of 3")]
    MaxLenTooSmall(usize),
    #[error("{0}")]
    Io(String),
}

/// Normalized event ready for featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanEvent {
    pub source_id: String,
    pub external_id: Option<String>,
    pub title: String,
    pub description: String,
    /// Model input: cleaned title and description joined and truncated.
    pub text: String,
    pub language: Option<String>,
    pub starts: Option<DateTime<FixedOffset>>,
    pub ends: Option<DateTime<FixedOffset>>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub city: Option<String>,
    pub venue: Option<String>,
    pub label: Option<CategoryId>,
}

/// `title + " " + description`, cut to at most `max_chars` characters on a
/// word boundary. A single word longer than the limit is cut hard.
pub fn build_text(title: &str, description: &str, max_chars: usize) -> String {
    let joined = match (title.is_empty(), description.is_empty()) {
        (_, true) => title.to_string(),
        (true, false) => description.to_string(),
        (false, false) => format!("{title} {description}"),
    };
    if joined.chars().count() <= max_chars {
        return joined;
    }
    let cut = joined.char_indices().nth(max_chars).map(|(i, _)| i).unwrap_or(joined.len());
    let head = &joined[..cut];
    let next_is_break = joined[cut..].starts_with(char::is_whitespace);
    if next_is_break {
        return head.trim_end().to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(space) => head[..space].trim_end().to_string(),
        None => head.to_string(),
    }
}

/// Parses the timestamp shapes seen in source payloads. Naive values are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<FixedOffset>> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t);
    }
    if let Ok(t) = DateTime::parse_from_rfc2822(s) {
        return Some(t);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&naive).fixed_offset());
        }
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%z") {
        return Some(t);
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|naive| Utc.from_utc_datetime(&naive).fixed_offset())
}

pub fn valid_latitude(v: f64) -> bool {
    v.is_finite() && (-90.0..=90.0).contains(&v)
}

pub fn valid_longitude(v: f64) -> bool {
    v.is_finite() && (-180.0..=180.0).contains(&v)
}

/// Validates a coordinate pair. When only the swapped reading is in range the
/// pair is swapped; when neither is, both are dropped.
pub fn parse_coordinates(lat: Option<&str>, lon: Option<&str>) -> (Option<f64>, Option<f64>) {
    let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<f64>().ok());
    match (parse(lat), parse(lon)) {
        (Some(a), Some(o)) if valid_latitude(a) && valid_longitude(o) => (Some(a), Some(o)),
        (Some(a), Some(o)) if valid_latitude(o) && valid_longitude(a) => (Some(o), Some(a)),
        (Some(a), None) if valid_latitude(a) => (Some(a), None),
        (None, Some(o)) if valid_longitude(o) => (None, Some(o)),
        _ => (None, None),
    }
}

fn clean_optional(s: Option<&str>) -> Option<String> {
    s.map(|v| v.split_whitespace().collect::<Vec<_>>().join(" ")).filter(|v| !v.is_empty())
}

/// Cleans one raw event. Returns `None` when nothing usable is left of the text.
pub fn prepare_event(raw: &RawEvent, max_chars: usize) -> Option<CleanEvent> {
    let title = clean_text(&raw.title_raw);
    let description = clean_text(&raw.description_raw);
    let text = build_text(&title, &description, max_chars);
    if text.is_empty() {
        return None;
    }
    let starts = raw.starts_raw.as_deref().and_then(parse_timestamp);
    let mut ends = raw.ends_raw.as_deref().and_then(parse_timestamp);
    if let (Some(s), Some(e)) = (starts, ends) {
        if e < s {
            ends = None;
        }
    }
    let (latitude, longitude) = parse_coordinates(raw.lat_raw.as_deref(), raw.lon_raw.as_deref());
    Some(CleanEvent {
        source_id: raw.source_id.clone(),
        external_id: raw.external_id.clone(),
        title,
        description,
        text,
        language: raw.locale.clone(),
        starts,
        ends,
        latitude,
        longitude,
        city: clean_optional(raw.city_raw.as_deref()),
        venue: clean_optional(raw.venue_raw.as_deref()),
        label: raw.label,
    })
}
