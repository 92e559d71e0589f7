use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::model::argmax;
use super::{ClassifierError, ClassifierModel, Featurizer};
use crate::ingestion::SourceIndex;
use crate::taxonomy::CategoryId;
use crate::textprep::CleanEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RuleSource,
    RuleVenue,
    Model,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::RuleSource => "rule-source",
            Method::RuleVenue => "rule-venue",
            Method::Model => "model",
        }
    }
}

/// One classified event. Scores and probabilities are per class of the
/// first-level head and are empty when a rule fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub source_id: String,
    pub external_id: Option<String>,
    pub classes: Vec<CategoryId>,
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub pred: CategoryId,
    pub actual: Option<CategoryId>,
    pub method: Method,
    pub text: String,
}

/// Source rule, then venue rule, then the model.
pub struct Cascade<'a> {
    sources: &'a SourceIndex,
    model: &'a ClassifierModel,
    featurizer: &'a Featurizer,
    model_calls: AtomicUsize,
}

impl<'a> Cascade<'a> {
    pub fn new(sources: &'a SourceIndex, model: &'a ClassifierModel, featurizer: &'a Featurizer) -> Self {
        Cascade { sources, model, featurizer, model_calls: AtomicUsize::new(0) }
    }

    /// Number of events that reached the model path so far.
    pub fn model_calls(&self) -> usize {
        self.model_calls.load(Ordering::Relaxed)
    }

    pub fn classify_event(&self, index: usize, event: &CleanEvent) -> Result<Prediction, ClassifierError> {
        let rule = self.sources.trusted_category(&event.source_id).map(|c| (c, Method::RuleSource)).or_else(|| {
            event
                .venue
                .as_deref()
                .and_then(|v| self.sources.venue_category(&event.source_id, v))
                .map(|c| (c, Method::RuleVenue))
        });
        let mut prediction = Prediction {
            index,
            source_id: event.source_id.clone(),
            external_id: event.external_id.clone(),
            classes: Vec::new(),
            scores: Vec::new(),
            probabilities: Vec::new(),
            pred: CategoryId(0),
            actual: event.label,
            method: Method::Model,
            text: event.text.clone(),
        };
        if let Some((category, method)) = rule {
            prediction.pred = category;
            prediction.method = method;
            return Ok(prediction);
        }

        self.model_calls.fetch_add(1, Ordering::Relaxed);
        let x = self.featurizer.featurize(event)?;
        let scores = self.model.head.scores(&x)?;
        let mut probabilities = scores.clone();
        super::model::softmax_in_place(&mut probabilities);
        let mut pred = self.model.head.classes[argmax(&scores)];
        if let Some(branch) = self.model.branch(pred) {
            pred = branch.predict(&x)?;
        }
        prediction.classes = self.model.head.classes.clone();
        prediction.scores = scores;
        prediction.probabilities = probabilities;
        prediction.pred = pred;
        Ok(prediction)
    }

    /// Classifies all events across `threads` workers; output keeps input order.
    pub fn classify_all(&self, events: &[CleanEvent], threads: usize) -> Result<Vec<Prediction>, ClassifierError> {
        let threads = threads.max(1).min(events.len().max(1));
        let chunk = events.len().div_ceil(threads).max(1);
        let results: Vec<Result<Vec<Prediction>, ClassifierError>> = std::thread::scope(|s| {
            let handles: Vec<_> = events
                .chunks(chunk)
                .enumerate()
                .map(|(k, part)| {
                    s.spawn(move || {
                        part.iter()
                            .enumerate()
                            .map(|(i, e)| self.classify_event(k * chunk + i, e))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("classification worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(events.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train::{ClassWeights, TrainParams, TrainingMeta};
    use crate::classifier::{FeaturizerConfig, LogisticHead};
    use crate::encoder::Matrix;
    use crate::ingestion::{SourceDescriptor, SourceKind};
    use crate::taxonomy::Taxonomy;

    fn event(source: &str, venue: Option<&str>, text: &str) -> CleanEvent {
        CleanEvent {
            source_id: source.into(),
            external_id: None,
            title: text.into(),
            description: String::new(),
            text: text.into(),
            language: None,
            starts: None,
            ends: None,
            latitude: None,
            longitude: None,
            city: None,
            venue: venue.map(str::to_string),
            label: None,
        }
    }

    fn fixture() -> (SourceIndex, ClassifierModel, Featurizer) {
        let tax = Taxonomy::default_taxonomy();
        let mut trusted = SourceDescriptor::new("music-feed", SourceKind::Feed, "m.xml");
        trusted.trust = Some(CategoryId(0));
        let mut venues = SourceDescriptor::new("city-api", SourceKind::ApiDump, "c.json");
        venues.venue_rules.insert("Fiera Milano".into(), CategoryId(5));
        let index = SourceIndex::new(&[trusted, venues], &tax).unwrap();

        let buckets = 16;
        let cfg = FeaturizerConfig::hashed(buckets, 0);
        let featurizer = Featurizer::from_config(&cfg).unwrap();
        let mut b = Matrix::zeros(7, buckets + 1);
        // Class 3 wins on the intercept for any input.
        b.set(3, buckets, 1.0);
        let head = LogisticHead {
            classes: (0..7).map(CategoryId).collect(),
            coefficients: b,
            meta: TrainingMeta {
                params: TrainParams { class_weights: ClassWeights::None, ..Default::default() },
                class_weights: vec![1.0; 7],
                examples: 0,
                loss_history: vec![],
                final_loss: 0.0,
            },
        };
        (index, ClassifierModel::new(cfg, head, vec![]).unwrap(), featurizer)
    }

    #[test]
    fn trusted_source_skips_model() {
        let (index, model, featurizer) = fixture();
        let cascade = Cascade::new(&index, &model, &featurizer);
        let p = cascade.classify_event(0, &event("music-feed", Some("Fiera Milano"), "anything")).unwrap();
        assert_eq!((p.pred, p.method), (CategoryId(0), Method::RuleSource));
        assert!(p.probabilities.is_empty());
        assert_eq!(cascade.model_calls(), 0);
    }

    #[test]
    fn venue_rule_applies_to_untrusted_source() {
        let (index, model, featurizer) = fixture();
        let cascade = Cascade::new(&index, &model, &featurizer);
        let p = cascade.classify_event(0, &event("city-api", Some("fiera  milano"), "expo")).unwrap();
        assert_eq!((p.pred, p.method), (CategoryId(5), Method::RuleVenue));
        assert_eq!(cascade.model_calls(), 0);
    }

    #[test]
    fn fallback_uses_model_argmax() {
        let (index, model, featurizer) = fixture();
        let cascade = Cascade::new(&index, &model, &featurizer);
        let e = event("city-api", Some("Teatro Nuovo"), "a night at the opera");
        let p = cascade.classify_event(4, &e).unwrap();
        let proba = model.head.predict_proba(&featurizer.featurize(&e).unwrap()).unwrap();
        assert_eq!(p.method, Method::Model);
        assert_eq!(p.pred, model.head.classes[argmax(&proba)]);
        assert_eq!(p.pred, CategoryId(3));
        assert_eq!(p.index, 4);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(cascade.model_calls(), 1);
    }

    #[test]
    fn parallel_batch_keeps_order() {
        let (index, model, featurizer) = fixture();
        let cascade = Cascade::new(&index, &model, &featurizer);
        let events: Vec<CleanEvent> = (0..23)
            .map(|i| match i % 3 {
                0 => event("music-feed", None, "x"),
                1 => event("city-api", Some("Fiera Milano"), "y"),
                _ => event("other", None, "z"),
            })
            .collect();
        let serial: Vec<Prediction> =
            events.iter().enumerate().map(|(i, e)| cascade.classify_event(i, e).unwrap()).collect();
        let parallel = cascade.classify_all(&events, 4).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(cascade.model_calls(), 2 * 7);
    }
}
