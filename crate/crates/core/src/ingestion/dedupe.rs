use std::collections::HashSet;

use super::RawEvent;
use crate::hash::Fnv64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DedupeKey {
    External { source_id: String, external_id: String },
    Content(u64),
}

/// `(source_id, external_id)` when the source supplied an id, otherwise a
/// 64-bit hash over title, start and city.
pub fn dedupe_key(event: &RawEvent) -> DedupeKey {
    match &event.external_id {
        Some(ext) => DedupeKey::External { source_id: event.source_id.clone(), external_id: ext.clone() },
        None => {
            let mut h = Fnv64::new();
            for field in [Some(event.title_raw.as_str()), event.starts_raw.as_deref(), event.city_raw.as_deref()] {
                match field {
                    Some(s) => {
                        h.write(&[1]);
                        h.write(&(s.len() as u64).to_le_bytes());
                        h.write(s.as_bytes());
                    }
                    None => h.write(&[0]),
                }
            }
            DedupeKey::Content(h.finish())
        }
    }
}

/// Keeps the first occurrence of every key, preserving order.
pub fn dedupe(events: Vec<RawEvent>) -> Vec<RawEvent> {
    let mut seen = HashSet::with_capacity(events.len());
    events.into_iter().filter(|e| seen.insert(dedupe_key(e))).collect()
}
