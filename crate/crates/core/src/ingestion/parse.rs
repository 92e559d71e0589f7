//! Payload parsers for the three source kinds. Parsers return events in
//! payload order plus the number of items skipped for lacking a title;
//! `fetched_at` is stamped later by the caller.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Value};

use super::{RawEvent, SourceDescriptor};
use crate::taxonomy::CategoryId;

pub type Parsed = (Vec<RawEvent>, usize);

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

fn base_event(desc: &SourceDescriptor, title: String) -> RawEvent {
    let mut ev = RawEvent::new(desc.source_id.clone(), title);
    ev.locale = desc.locale_hint.clone();
    ev
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn field(obj: &Map<String, Value>, names: &[&str]) -> Option<String> {
    names.iter().find_map(|n| obj.get(*n).and_then(scalar_string))
}

/// JSON dump: a top-level array of event objects, or an object holding
/// one under `events`, `items`, `data` or `results`.
pub fn parse_api_dump(bytes: &[u8], desc: &SourceDescriptor) -> Result<Parsed, String> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let items = match &root {
        Value::Array(items) => items,
        Value::Object(map) => ["events", "items", "data", "results"]
            .iter()
            .find_map(|k| map.get(*k).and_then(Value::as_array))
            .ok_or_else(|| "object payload has no events/items/data/results array".to_string())?,
        _ => return Err("payload is neither an array nor an object".to_string()),
    };

    let mut events = Vec::with_capacity(items.len());
    let mut skipped = 0;
    for item in items {
        let Some(obj) = item.as_object() else {
            skipped += 1;
            continue;
        };
        let title = field(obj, &["title", "name"]).unwrap_or_default();
        if blank(&title) {
            skipped += 1;
            continue;
        }
        let mut ev = base_event(desc, title);
        ev.external_id = field(obj, &["external_id", "id", "uid"]);
        ev.description_raw = field(obj, &["description", "summary", "body"]).unwrap_or_default();
        ev.starts_raw = field(obj, &["starts", "start", "starts_at", "start_date"]);
        ev.ends_raw = field(obj, &["ends", "end", "ends_at", "end_date"]);
        ev.lat_raw = field(obj, &["latitude", "lat"]);
        ev.lon_raw = field(obj, &["longitude", "lon", "lng"]);
        ev.city_raw = field(obj, &["city"]);
        match obj.get("venue") {
            Some(Value::Object(venue)) => {
                ev.venue_raw = field(venue, &["name"]);
                ev.city_raw = ev.city_raw.or_else(|| field(venue, &["city"]));
                ev.lat_raw = ev.lat_raw.or_else(|| field(venue, &["latitude", "lat"]));
                ev.lon_raw = ev.lon_raw.or_else(|| field(venue, &["longitude", "lon", "lng"]));
            }
            Some(v) => ev.venue_raw = scalar_string(v),
            None => {}
        }
        ev.label = obj.get("label").and_then(Value::as_u64).and_then(|n| u32::try_from(n).ok()).map(CategoryId);
        events.push(ev);
    }
    Ok((events, skipped))
}

fn child_text(node: roxmltree::Node<'_, '_>, names: &[&str]) -> Option<String> {
    names.iter().find_map(|name| {
        node.children().find(|c| c.is_element() && c.tag_name().name().eq_ignore_ascii_case(name)).map(|c| {
            let text: String = c.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect();
            match text.trim() {
                "" => c.attribute("href").unwrap_or("").to_string(),
                t => t.to_string(),
            }
        })
    })
}

/// RSS 2.0 `<item>`s or Atom `<entry>`s. Event metadata is read from
/// namespaced children by local name (`ev:startdate`, `geo:lat`, ...).
pub fn parse_feed(bytes: &[u8], desc: &SourceDescriptor) -> Result<Parsed, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    let root_name = root.tag_name().name();
    if !matches!(root_name, "rss" | "feed" | "RDF") {
        return Err(format!("unexpected feed root element <{root_name}>"));
    }

    let mut events = Vec::new();
    let mut skipped = 0;
    for item in root.descendants().filter(|n| n.is_element() && matches!(n.tag_name().name(), "item" | "entry")) {
        let title = child_text(item, &["title"]).unwrap_or_default();
        if blank(&title) {
            skipped += 1;
            continue;
        }
        let mut ev = base_event(desc, title);
        ev.external_id = child_text(item, &["guid", "id", "link"]).filter(|s| !blank(s));
        ev.description_raw = child_text(item, &["description", "summary", "content", "encoded"]).unwrap_or_default();
        ev.starts_raw = child_text(item, &["startdate", "start", "dtstart"]);
        ev.ends_raw = child_text(item, &["enddate", "end", "dtend"]);
        ev.lat_raw = child_text(item, &["lat", "latitude"]);
        ev.lon_raw = child_text(item, &["long", "lon", "longitude"]);
        ev.city_raw = child_text(item, &["city"]);
        ev.venue_raw = child_text(item, &["venue", "location"]);
        events.push(ev);
    }
    Ok((events, skipped))
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid page regex"))
}

fn meta_content(html: &str, key: &str) -> Option<String> {
    static META: OnceLock<Regex> = OnceLock::new();
    static ATTR: OnceLock<Regex> = OnceLock::new();
    let meta = re(&META, r"(?is)<meta\s[^>]*>");
    let attr = re(&ATTR, r#"(?is)([a-z:_-]+)\s*=\s*"([^"]*)""#);
    meta.find_iter(html).find_map(|m| {
        let mut name = None;
        let mut content = None;
        for cap in attr.captures_iter(m.as_str()) {
            match cap[1].to_ascii_lowercase().as_str() {
                "name" | "property" | "itemprop" => name = Some(cap[2].to_string()),
                "content" => content = Some(cap[2].to_string()),
                _ => {}
            }
        }
        (name.as_deref().is_some_and(|n| n.eq_ignore_ascii_case(key))).then_some(content).flatten()
    })
}

/// One recorded HTML page describing a single event.
pub fn parse_page(html: &str, page_id: &str, desc: &SourceDescriptor) -> Option<RawEvent> {
    static H1: OnceLock<Regex> = OnceLock::new();
    static TITLE: OnceLock<Regex> = OnceLock::new();
    static PARA: OnceLock<Regex> = OnceLock::new();
    let title = re(&H1, r"(?is)<h1[^>]*>(.*?)</h1>")
        .captures(html)
        .or_else(|| re(&TITLE, r"(?is)<title[^>]*>(.*?)</title>").captures(html))
        .map(|c| c[1].trim().to_string())
        .unwrap_or_default();
    if blank(&title) {
        return None;
    }
    let mut ev = base_event(desc, title);
    ev.external_id = Some(page_id.to_string());
    ev.description_raw = meta_content(html, "description")
        .or_else(|| meta_content(html, "og:description"))
        .or_else(|| re(&PARA, r"(?is)<p[^>]*>(.*?)</p>").captures(html).map(|c| c[1].trim().to_string()))
        .unwrap_or_default();
    ev.starts_raw = meta_content(html, "event:start_time").or_else(|| meta_content(html, "startDate"));
    ev.ends_raw = meta_content(html, "event:end_time").or_else(|| meta_content(html, "endDate"));
    ev.lat_raw = meta_content(html, "place:location:latitude");
    ev.lon_raw = meta_content(html, "place:location:longitude");
    ev.city_raw = meta_content(html, "event:city");
    ev.venue_raw = meta_content(html, "event:venue");
    Some(ev)
}
