//! Seeded generator of keyword-separable labeled events.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::RawEvent;
use crate::taxonomy::CategoryId;

/// The bundled 7-class specification (music twice as frequent as the rest).
pub const BUNDLED_SPEC: &str = include_str!("../data/synthetic.default.json");

pub const SYNTHETIC_SOURCE: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub events_per_class: BTreeMap<CategoryId, usize>,
    pub keyword_pools: BTreeMap<CategoryId, Vec<String>>,
    pub noise_vocabulary: Vec<String>,
    /// Probability that a content word is drawn from the noise vocabulary.
    pub noise_ratio: f64,
    /// Probability that an event gets one accented word.
    pub accent_rate: f64,
    /// Probability that an event's description carries markup, escapes or
    /// an e-mail address.
    pub contamination_rate: f64,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_SPEC).expect("bundled corpus spec is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| CorpusError::Invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn total(&self) -> usize {
        self.events_per_class.values().sum()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(0.0..1.0).contains(&self.noise_ratio) {
            return Err(CorpusError::Invalid(format!("noise ratio {} outside [0, 1)", self.noise_ratio)));
        }
        for (name, rate) in [("accent rate", self.accent_rate), ("contamination rate", self.contamination_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(CorpusError::Invalid(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if self.noise_ratio > 0.0 && self.noise_vocabulary.is_empty() {
            return Err(CorpusError::Invalid("noise ratio is positive but the noise vocabulary is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for class in self.events_per_class.keys() {
            let pool = self
                .keyword_pools
                .get(class)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| CorpusError::Invalid(format!("class {class} has no keyword pool")))?;
            for word in pool {
                if !seen.insert(word.as_str()) {
                    return Err(CorpusError::Invalid(format!("keyword {word:?} appears in more than one pool")));
                }
            }
        }
        for word in self.keyword_pools.values().flatten().chain(&self.noise_vocabulary) {
            if word.is_empty() || !word.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()) {
                return Err(CorpusError::Invalid(format!("word {word:?} must be lowercase ASCII alphanumeric")));
            }
        }
        Ok(())
    }
}

const CITIES: [(&str, f64, f64); 6] = [
    ("London", 51.50282, -0.119252),
    ("Glasgow", 55.901126, -4.373647),
    ("Bogota", 4.659293, -74.093524),
    ("Christchurch", -43.567162, 172.702541),
    ("Hong Kong", 22.280244, 114.15723),
    ("Milan", 45.4642, 9.19),
];

const ACCENTS: [(char, char); 5] = [('e', 'é'), ('a', 'à'), ('o', 'ö'), ('u', 'ü'), ('i', 'í')];

fn inject_accent(word: &str, rng: &mut ChaCha8Rng) -> String {
    let (plain, accented) = ACCENTS[rng.gen_range(0..ACCENTS.len())];
    match word.find(plain) {
        Some(i) => format!("{}{}{}", &word[..i], accented, &word[i + 1..]),
        None => format!("{word}é"),
    }
}

fn contaminate(description: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => format!("<p>{description}</p>"),
        1 => format!("{description} \\u003cbr /\\u003e"),
        2 => match description.split_once(' ') {
            Some((a, b)) => format!("{a} &amp; {b}"),
            None => format!("{description} &amp;"),
        },
        _ => format!("{description} contact info@example.org"),
    }
}

/// Generates `spec.total()` labeled events in a seeded shuffled order.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<RawEvent>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<CategoryId> =
        spec.events_per_class.iter().flat_map(|(&c, &n)| std::iter::repeat_n(c, n)).collect();
    labels.shuffle(&mut rng);
    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();

    let mut events = Vec::with_capacity(labels.len());
    for (i, label) in labels.into_iter().enumerate() {
        let pool = &spec.keyword_pools[&label];
        let draw = |rng: &mut ChaCha8Rng| -> String {
            if rng.gen::<f64>() < spec.noise_ratio {
                spec.noise_vocabulary.choose(rng).unwrap().clone()
            } else {
                pool.choose(rng).unwrap().clone()
            }
        };
        let mut title: Vec<String> = (0..rng.gen_range(2..=4)).map(|_| draw(&mut rng)).collect();
        let mut desc: Vec<String> = (0..rng.gen_range(8..=15)).map(|_| draw(&mut rng)).collect();
        if rng.gen::<f64>() < spec.accent_rate {
            let target = if rng.gen_bool(0.5) { &mut title } else { &mut desc };
            let k = rng.gen_range(0..target.len());
            target[k] = inject_accent(&target[k], &mut rng);
        }
        let mut description = desc.join(" ");
        if rng.gen::<f64>() < spec.contamination_rate {
            description = contaminate(&description, &mut rng);
        }
        let (city, lat, lon) = CITIES[rng.gen_range(0..CITIES.len())];
        let starts = base + Duration::days(rng.gen_range(0..365)) + Duration::hours(rng.gen_range(8..22));
        let ends = starts + Duration::hours(rng.gen_range(1..6));

        let mut e = RawEvent::new(SYNTHETIC_SOURCE, title.join(" "));
        e.external_id = Some(format!("syn-{i:05}"));
        e.description_raw = description;
        e.starts_raw = Some(starts.to_rfc3339());
        e.ends_raw = Some(ends.to_rfc3339());
        e.lat_raw = Some(lat.to_string());
        e.lon_raw = Some(lon.to_string());
        e.city_raw = Some(city.to_string());
        e.label = Some(label);
        events.push(e);
    }
    Ok(events)
}
