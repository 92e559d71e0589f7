use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::parse::{parse_api_dump, parse_feed, parse_page, Parsed};
use super::{dedupe, IngestError, RawEvent};
use crate::taxonomy::{CategoryId, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    ApiDump,
    Feed,
    ScrapedPageSet,
}

/// One configured source. `trust` and `venue_rules` drive the rule stages
/// of the classification cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub kind: SourceKind,
    pub location: String,
    #[serde(default)]
    pub trust: Option<CategoryId>,
    #[serde(default)]
    pub venue_rules: BTreeMap<String, CategoryId>,
    #[serde(default)]
    pub locale_hint: Option<String>,
}

impl SourceDescriptor {
    pub fn new(source_id: impl Into<String>, kind: SourceKind, location: impl Into<String>) -> Self {
        SourceDescriptor {
            source_id: source_id.into(),
            kind,
            location: location.into(),
            trust: None,
            venue_rules: BTreeMap::new(),
            locale_hint: None,
        }
    }

    fn is_remote(&self) -> bool {
        self.location.starts_with("http://") || self.location.starts_with("https://")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourcesDocument {
    List(Vec<SourceDescriptor>),
    Wrapped { sources: Vec<SourceDescriptor> },
}

/// Reads a sources file (a JSON array, or `{"sources": [...]}`). Relative
/// file locations are resolved against the file's directory.
pub fn load_sources(path: &Path) -> Result<Vec<SourceDescriptor>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
    let doc: SourcesDocument =
        serde_json::from_str(&text).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
    let mut sources = match doc {
        SourcesDocument::List(v) | SourcesDocument::Wrapped { sources: v } => v,
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for s in &mut sources {
        if !s.is_remote() && Path::new(&s.location).is_relative() {
            s.location = base.join(&s.location).to_string_lossy().into_owned();
        }
    }
    let mut seen = HashSet::new();
    for s in &sources {
        if !seen.insert(s.source_id.as_str()) {
            return Err(IngestError::Config(format!("duplicate source_id {:?}", s.source_id)));
        }
    }
    Ok(sources)
}

/// Lookup of rule data by source id, validated against a taxonomy.
#[derive(Debug, Clone, Default)]
pub struct SourceIndex {
    trust: HashMap<String, CategoryId>,
    venues: HashMap<String, HashMap<String, CategoryId>>,
}

fn venue_key(venue: &str) -> String {
    venue.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SourceIndex {
    pub fn new(sources: &[SourceDescriptor], taxonomy: &Taxonomy) -> Result<Self, IngestError> {
        let mut index = SourceIndex::default();
        for s in sources {
            if let Some(cat) = s.trust {
                if !taxonomy.contains(cat) {
                    return Err(IngestError::Config(format!(
                        "source {}: trust category {cat} is not in the taxonomy",
                        s.source_id
                    )));
                }
                index.trust.insert(s.source_id.clone(), cat);
            }
            let mut venues = HashMap::new();
            for (venue, &cat) in &s.venue_rules {
                if !taxonomy.contains(cat) {
                    return Err(IngestError::Config(format!(
                        "source {}: venue {venue:?} maps to unknown category {cat}",
                        s.source_id
                    )));
                }
                venues.insert(venue_key(venue), cat);
            }
            if !venues.is_empty() {
                index.venues.insert(s.source_id.clone(), venues);
            }
        }
        Ok(index)
    }

    pub fn trusted_category(&self, source_id: &str) -> Option<CategoryId> {
        self.trust.get(source_id).copied()
    }

    pub fn venue_category(&self, source_id: &str, venue: &str) -> Option<CategoryId> {
        self.venues.get(source_id)?.get(&venue_key(venue)).copied()
    }
}

fn read_location(desc: &SourceDescriptor) -> Result<Vec<u8>, IngestError> {
    let unreachable = |message: String| IngestError::Unreachable {
        source_id: desc.source_id.clone(),
        location: desc.location.clone(),
        message,
    };
    if desc.is_remote() {
        let response = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .build()
            .get(&desc.location)
            .call()
            .map_err(|e| unreachable(e.to_string()))?;
        let mut body = Vec::new();
        std::io::Read::read_to_end(&mut response.into_reader(), &mut body).map_err(|e| unreachable(e.to_string()))?;
        Ok(body)
    } else {
        std::fs::read(&desc.location).map_err(|e| unreachable(e.to_string()))
    }
}

fn read_page_set(desc: &SourceDescriptor) -> Result<Parsed, IngestError> {
    let unreachable = |message: String| IngestError::Unreachable {
        source_id: desc.source_id.clone(),
        location: desc.location.clone(),
        message,
    };
    let mut pages: Vec<PathBuf> = std::fs::read_dir(&desc.location)
        .map_err(|e| unreachable(e.to_string()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "html" || x == "htm"))
        .collect();
    pages.sort();
    let mut events = Vec::new();
    let mut skipped = 0;
    for page in pages {
        let bytes = std::fs::read(&page).map_err(|e| unreachable(e.to_string()))?;
        let html = String::from_utf8_lossy(&bytes);
        let page_id = page.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match parse_page(&html, &page_id, desc) {
            Some(ev) => events.push(ev),
            None => skipped += 1,
        }
    }
    Ok((events, skipped))
}

fn fetch_unstamped(desc: &SourceDescriptor) -> Result<Parsed, IngestError> {
    let unparseable = |message: String| IngestError::Unparseable { source_id: desc.source_id.clone(), message };
    match desc.kind {
        SourceKind::ApiDump => parse_api_dump(&read_location(desc)?, desc).map_err(unparseable),
        SourceKind::Feed => parse_feed(&read_location(desc)?, desc).map_err(unparseable),
        SourceKind::ScrapedPageSet => read_page_set(desc),
    }
}

fn stamp(events: &mut [RawEvent], base: DateTime<Utc>, offset: usize) {
    for (i, ev) in events.iter_mut().enumerate() {
        ev.fetched_at = base + chrono::Duration::milliseconds((offset + i) as i64);
    }
}

/// Fetches a single source. `fetched_at` is `base` plus one millisecond per event.
/// Returns the events and the count of items skipped for lacking a title.
pub fn fetch_source(desc: &SourceDescriptor, base: DateTime<Utc>) -> Result<(Vec<RawEvent>, usize), IngestError> {
    let (mut events, skipped) = fetch_unstamped(desc)?;
    stamp(&mut events, base, 0);
    Ok((events, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceSummary {
    pub source_id: String,
    pub fetched: usize,
    pub skipped: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    /// Deduplicated events in source order, ready to append.
    pub events: Vec<RawEvent>,
    pub sources: Vec<SourceSummary>,
    pub duplicates: usize,
}

/// Fetches every source with at most `parallel` concurrent fetches. Failed
/// sources are reported and skipped. Results are merged in configuration
/// order and stamped with monotonically increasing `fetched_at`.
pub fn ingest_sources(sources: &[SourceDescriptor], parallel: usize, base: DateTime<Utc>) -> IngestReport {
    let workers = parallel.clamp(1, sources.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Parsed, IngestError>>>> = Mutex::new((0..sources.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= sources.len() {
                    break;
                }
                let result = fetch_unstamped(&sources[i]);
                slots.lock().expect("fetch slots lock")[i] = Some(result);
            });
        }
    });

    let mut all = Vec::new();
    let mut summaries = Vec::with_capacity(sources.len());
    for (desc, slot) in sources.iter().zip(slots.into_inner().expect("fetch slots lock")) {
        let result = slot.expect("every source is fetched");
        match result {
            Ok((events, skipped)) => {
                summaries.push(SourceSummary {
                    source_id: desc.source_id.clone(),
                    fetched: events.len(),
                    skipped,
                    error: None,
                });
                all.extend(events);
            }
            Err(e) => summaries.push(SourceSummary {
                source_id: desc.source_id.clone(),
                fetched: 0,
                skipped: 0,
                error: Some(e.to_string()),
            }),
        }
    }
    stamp(&mut all, base, 0);
    let before = all.len();
    let events = dedupe(all);
    IngestReport { duplicates: before - events.len(), events, sources: summaries }
}
