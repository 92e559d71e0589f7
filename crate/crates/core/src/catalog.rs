//! The filterable event catalog and its CSV / JSONL exchange formats.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Method, Prediction};
use crate::taxonomy::{CategoryId, Taxonomy};
use crate::textprep::{parse_timestamp, valid_latitude, valid_longitude, CleanEvent};

/// Column order of the comma-separated export.
pub const CSV_HEADER: [&str; 8] =
    ["title", "description", "taxonomy", "starts", "ends", "latitude", "longitude", "city"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("events and predictions do not line up: {0}")]
    Mismatch(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("invalid query: {0}")]
    Query(String),
}

mod rfc3339 {
    use chrono::{DateTime, FixedOffset, SecondsFormat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<DateTime<FixedOffset>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(t) => s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, false)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<FixedOffset>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| DateTime::parse_from_rfc3339(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub title: String,
    pub description: String,
    pub taxonomy: CategoryId,
    /// Category wording shown in the catalog.
    pub taxonomy_name: String,
    /// Canonical names from the first-level ancestor down to the category.
    pub taxonomy_path: Vec<String>,
    #[serde(with = "rfc3339")]
    pub starts: Option<DateTime<FixedOffset>>,
    #[serde(with = "rfc3339")]
    pub ends: Option<DateTime<FixedOffset>>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub city: Option<String>,
    #[serde(default)]
    pub source_id: String,
    #[serde(default)]
    pub method: Option<Method>,
}

fn path_names(taxonomy: &Taxonomy, id: CategoryId) -> Result<Vec<String>, CatalogError> {
    taxonomy
        .path(id)
        .map(|p| p.iter().map(|n| n.name.clone()).collect())
        .map_err(|_| CatalogError::UnknownCategory(id.to_string()))
}

fn sort_entries(entries: &mut [CatalogEntry]) {
    entries.sort_by(|a, b| (a.starts.is_none(), a.starts, &a.title).cmp(&(b.starts.is_none(), b.starts, &b.title)));
}

/// One entry per event, sorted by start time then title; events without a
/// start come last. `predictions[i].index` must equal `i`.
pub fn build_catalog(
    events: &[CleanEvent],
    predictions: &[Prediction],
    taxonomy: &Taxonomy,
) -> Result<Vec<CatalogEntry>, CatalogError> {
    if events.len() != predictions.len() {
        return Err(CatalogError::Mismatch(format!("{} events but {} predictions", events.len(), predictions.len())));
    }
    let mut entries = Vec::with_capacity(events.len());
    for (i, (event, pred)) in events.iter().zip(predictions).enumerate() {
        if pred.index != i || pred.source_id != event.source_id {
            return Err(CatalogError::Mismatch(format!("prediction {} does not belong to event {i}", pred.index)));
        }
        let node = taxonomy.get(pred.pred).ok_or_else(|| CatalogError::UnknownCategory(pred.pred.to_string()))?;
        let ends = match (event.starts, event.ends) {
            (Some(s), Some(e)) if e < s => None,
            (_, e) => e,
        };
        entries.push(CatalogEntry {
            title: event.title.clone(),
            description: event.description.clone(),
            taxonomy: node.id,
            taxonomy_name: node.catalog_label().to_string(),
            taxonomy_path: path_names(taxonomy, node.id)?,
            starts: event.starts,
            ends,
            latitude: event.latitude.filter(|v| valid_latitude(*v)),
            longitude: event.longitude.filter(|v| valid_longitude(*v)),
            city: event.city.clone(),
            source_id: event.source_id.clone(),
            method: Some(pred.method),
        });
    }
    sort_entries(&mut entries);
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// Parses `lat_min,lat_max,lon_min,lon_max`.
    pub fn parse(s: &str) -> Result<Self, CatalogError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CatalogError::Query(format!("bbox {s:?}: {e}")))?;
        match parts[..] {
            [lat_min, lat_max, lon_min, lon_max] => Ok(BoundingBox { lat_min, lat_max, lon_min, lon_max }),
            _ => Err(CatalogError::Query(format!("bbox {s:?} needs four numbers"))),
        }
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

/// Every present clause must hold for an entry to be kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogQuery {
    /// Keep only these categories and their descendants.
    pub include: Option<BTreeSet<CategoryId>>,
    /// Drop these categories and their descendants; applied after `include`.
    pub exclude: Option<BTreeSet<CategoryId>>,
    /// Case-insensitive city match.
    pub city: Option<String>,
    pub bbox: Option<BoundingBox>,
    /// `[from, to]` must overlap `[starts, ends]`.
    pub from: Option<DateTime<FixedOffset>>,
    pub to: Option<DateTime<FixedOffset>>,
}

impl CatalogQuery {
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), CatalogError> {
        for id in self.include.iter().chain(&self.exclude).flatten() {
            if !taxonomy.contains(*id) {
                return Err(CatalogError::UnknownCategory(id.to_string()));
            }
        }
        if let Some(b) = &self.bbox {
            if !(b.lat_min <= b.lat_max && b.lon_min <= b.lon_max) {
                return Err(CatalogError::Query("bbox bounds are not ordered".into()));
            }
        }
        if let (Some(f), Some(t)) = (self.from, self.to) {
            if f > t {
                return Err(CatalogError::Query("date range starts after it ends".into()));
            }
        }
        Ok(())
    }

    pub fn matches(&self, entry: &CatalogEntry, taxonomy: &Taxonomy) -> bool {
        let in_any =
            |set: &BTreeSet<CategoryId>| set.iter().any(|&a| taxonomy.is_descendant_or_self(entry.taxonomy, a));
        if let Some(inc) = &self.include {
            if !in_any(inc) {
                return false;
            }
        }
        if let Some(exc) = &self.exclude {
            if in_any(exc) {
                return false;
            }
        }
        if let Some(city) = &self.city {
            match &entry.city {
                Some(c) if c.trim().to_lowercase() == city.trim().to_lowercase() => {}
                _ => return false,
            }
        }
        if let Some(b) = &self.bbox {
            match (entry.latitude, entry.longitude) {
                (Some(lat), Some(lon)) if b.contains(lat, lon) => {}
                _ => return false,
            }
        }
        if self.from.is_some() || self.to.is_some() {
            let Some(starts) = entry.starts else { return false };
            let ends = entry.ends.unwrap_or(starts);
            if self.from.is_some_and(|f| ends < f) || self.to.is_some_and(|t| starts > t) {
                return false;
            }
        }
        true
    }
}

pub fn filter(
    catalog: &[CatalogEntry],
    query: &CatalogQuery,
    taxonomy: &Taxonomy,
) -> Result<Vec<CatalogEntry>, CatalogError> {
    query.validate(taxonomy)?;
    Ok(catalog.iter().filter(|e| query.matches(e, taxonomy)).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CatalogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CatalogFormat::Jsonl),
            "csv" => Ok(CatalogFormat::Csv),
            other => Err(format!("unknown catalog format {other:?} (expected csv or jsonl)")),
        }
    }
}

fn timestamp(t: &Option<DateTime<FixedOffset>>) -> String {
    t.map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, false)).unwrap_or_default()
}

fn number(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn export(catalog: &[CatalogEntry], format: CatalogFormat) -> String {
    match format {
        CatalogFormat::Jsonl => catalog.iter().map(crate::jsonl::encode_line).collect(),
        CatalogFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory csv");
            for e in catalog {
                w.write_record([
                    e.title.as_str(),
                    &e.description,
                    &e.taxonomy_name,
                    &timestamp(&e.starts),
                    &timestamp(&e.ends),
                    &number(e.latitude),
                    &number(e.longitude),
                    e.city.as_deref().unwrap_or(""),
                ])
                .expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
        }
    }
}

/// A coordinate pair the importer swapped.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSwap {
    pub row: usize,
    pub title: String,
    /// `(latitude, longitude)` as read.
    pub before: (f64, f64),
    pub after: (f64, f64),
}

impl fmt::Display for CoordinateSwap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {} ({}): latitude/longitude swapped from ({}, {}) to ({}, {})",
            self.row, self.title, self.before.0, self.before.1, self.after.0, self.after.1
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportOutcome {
    pub entries: Vec<CatalogEntry>,
    pub swaps: Vec<CoordinateSwap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Reading {
    AsIs,
    Swapped,
    Both,
}

fn reading(lat: f64, lon: f64) -> Option<Reading> {
    let as_is = valid_latitude(lat) && valid_longitude(lon);
    let swapped = valid_latitude(lon) && valid_longitude(lat);
    match (as_is, swapped) {
        (true, true) => Some(Reading::Both),
        (true, false) => Some(Reading::AsIs),
        (false, true) => Some(Reading::Swapped),
        (false, false) => None,
    }
}

/// Fixes swapped coordinate columns. A pair valid only when swapped is
/// swapped. When some rows need swapping and no row is valid only as read,
/// the columns themselves are taken to be swapped and pairs valid either
/// way are swapped too.
fn fix_coordinates(entries: &mut [CatalogEntry], rows: &[usize]) -> Result<Vec<CoordinateSwap>, CatalogError> {
    let mut readings = Vec::with_capacity(entries.len());
    for (e, &row) in entries.iter().zip(rows) {
        readings.push(match (e.latitude, e.longitude) {
            (Some(lat), Some(lon)) => Some(reading(lat, lon).ok_or_else(|| CatalogError::Row {
                row,
                message: format!("coordinates ({lat}, {lon}) are out of range in either order"),
            })?),
            (Some(lat), None) if !valid_latitude(lat) => {
                return Err(CatalogError::Row { row, message: format!("latitude {lat} out of range") })
            }
            (None, Some(lon)) if !valid_longitude(lon) => {
                return Err(CatalogError::Row { row, message: format!("longitude {lon} out of range") })
            }
            _ => None,
        });
    }
    let columns_swapped = readings.contains(&Some(Reading::Swapped)) && !readings.contains(&Some(Reading::AsIs));
    let mut swaps = Vec::new();
    for ((e, r), &row) in entries.iter_mut().zip(&readings).zip(rows) {
        let swap = match r {
            Some(Reading::Swapped) => true,
            Some(Reading::Both) => columns_swapped,
            _ => false,
        };
        if swap {
            let (lat, lon) = (e.latitude.unwrap(), e.longitude.unwrap());
            e.latitude = Some(lon);
            e.longitude = Some(lat);
            swaps.push(CoordinateSwap { row, title: e.title.clone(), before: (lat, lon), after: (lon, lat) });
        }
    }
    Ok(swaps)
}

fn resolve_label(taxonomy: &Taxonomy, label: &str, row: usize) -> Result<(CategoryId, Vec<String>), CatalogError> {
    let node = taxonomy
        .resolve(crate::taxonomy::CategoryKey::parse(label))
        .map_err(|e| CatalogError::Row { row, message: e.to_string() })?;
    Ok((node.id, path_names(taxonomy, node.id)?))
}

pub fn import(text: &str, format: CatalogFormat, taxonomy: &Taxonomy) -> Result<ImportOutcome, CatalogError> {
    let (mut entries, rows) = match format {
        CatalogFormat::Jsonl => import_jsonl(text, taxonomy)?,
        CatalogFormat::Csv => import_csv(text, taxonomy)?,
    };
    let swaps = fix_coordinates(&mut entries, &rows)?;
    Ok(ImportOutcome { entries, swaps })
}

fn import_jsonl(text: &str, taxonomy: &Taxonomy) -> Result<(Vec<CatalogEntry>, Vec<usize>), CatalogError> {
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let mut e: CatalogEntry =
            serde_json::from_str(line).map_err(|err| CatalogError::Row { row, message: err.to_string() })?;
        if !taxonomy.contains(e.taxonomy) {
            return Err(CatalogError::Row { row, message: format!("unknown category {}", e.taxonomy) });
        }
        e.taxonomy_path = path_names(taxonomy, e.taxonomy)?;
        check_interval(&e, row)?;
        entries.push(e);
        rows.push(row);
    }
    Ok((entries, rows))
}

fn check_interval(e: &CatalogEntry, row: usize) -> Result<(), CatalogError> {
    match (e.starts, e.ends) {
        (Some(s), Some(t)) if t < s => Err(CatalogError::Row { row, message: "event ends before it starts".into() }),
        _ => Ok(()),
    }
}

fn import_csv(text: &str, taxonomy: &Taxonomy) -> Result<(Vec<CatalogEntry>, Vec<usize>), CatalogError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CatalogError::Row { row: 1, message: e.to_string() })?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let title_col = column("title").ok_or(CatalogError::Row { row: 1, message: "missing title column".into() })?;
    let tax_col = column("taxonomy").ok_or(CatalogError::Row { row: 1, message: "missing taxonomy column".into() })?;
    let cols: Vec<Option<usize>> =
        ["description", "starts", "ends", "latitude", "longitude", "city"].iter().map(|c| column(c)).collect();

    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CatalogError::Row {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: Option<usize>| c.and_then(|c| record.get(c)).map(str::trim).filter(|s| !s.is_empty());
        let time = |c: Option<usize>| -> Result<_, CatalogError> {
            field(c)
                .map(|s| {
                    parse_timestamp(s).ok_or_else(|| CatalogError::Row { row, message: format!("bad timestamp {s:?}") })
                })
                .transpose()
        };
        let coord = |c: Option<usize>| -> Result<_, CatalogError> {
            field(c)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| CatalogError::Row { row, message: format!("bad coordinate {s:?}") })
                })
                .transpose()
        };
        let label = field(Some(tax_col)).ok_or(CatalogError::Row { row, message: "empty taxonomy".into() })?;
        let (taxonomy_id, path) = resolve_label(taxonomy, label, row)?;
        let e = CatalogEntry {
            title: record.get(title_col).unwrap_or("").to_string(),
            description: cols[0].and_then(|c| record.get(c)).unwrap_or("").to_string(),
            taxonomy: taxonomy_id,
            taxonomy_name: label.to_string(),
            taxonomy_path: path,
            starts: time(cols[1])?,
            ends: time(cols[2])?,
            latitude: coord(cols[3])?,
            longitude: coord(cols[4])?,
            city: field(cols[5]).map(str::to_string),
            source_id: String::new(),
            method: None,
        };
        check_interval(&e, row)?;
        entries.push(e);
        rows.push(row);
    }
    Ok((entries, rows))
}
