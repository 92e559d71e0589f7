//! Source connectors, deduplication and the append-only raw store.

mod dedupe;
mod parse;
mod sources;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::CategoryId;

pub use dedupe::{dedupe, dedupe_key, DedupeKey};
pub use parse::{parse_api_dump, parse_feed, parse_page};
pub use sources::{
    fetch_source, ingest_sources, load_sources, IngestReport, SourceDescriptor, SourceIndex, SourceKind, SourceSummary,
};
pub use store::RawStore;

/// An event as collected, before any cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub source_id: String,
    pub external_id: Option<String>,
    pub title_raw: String,
    pub description_raw: String,
    pub starts_raw: Option<String>,
    pub ends_raw: Option<String>,
    pub lat_raw: Option<String>,
    pub lon_raw: Option<String>,
    pub city_raw: Option<String>,
    pub venue_raw: Option<String>,
    /// Language tag inherited from the source descriptor.
    pub locale: Option<String>,
    pub fetched_at: DateTime<Utc>,
    /// Present only for labelled (training) data.
    pub label: Option<CategoryId>,
}

impl RawEvent {
    /// A bare event with only the mandatory fields set.
    pub fn new(source_id: impl Into<String>, title: impl Into<String>) -> Self {
        RawEvent {
            source_id: source_id.into(),
            external_id: None,
            title_raw: title.into(),
            description_raw: String::new(),
            starts_raw: None,
            ends_raw: None,
            lat_raw: None,
            lon_raw: None,
            city_raw: None,
            venue_raw: None,
            locale: None,
            fetched_at: DateTime::<Utc>::UNIX_EPOCH,
            label: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source {source_id}: cannot read {location}: {message}")]
    Unreachable { source_id: String, location: String, message: String },
    #[error("source {source_id}: payload is not parseable: {message}")]
    Unparseable { source_id: String, message: String },
    #[error("source configuration: {0}")]
    Config(String),
    #[error("raw store {path}: {message}")]
    Store { path: String, message: String },
}
