use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::encoder::EncoderModel;
use crate::hash::Fnv64;
use crate::textprep::{words, CleanEvent, Vocabulary};

/// Dense feature vector fed to the logistic head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// How clean text becomes a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeaturizerConfig {
    /// Word n-gram counts hashed into `num_buckets`, L2-normalized.
    HashedNgram {
        num_buckets: usize,
        #[serde(default = "default_orders")]
        orders: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
    /// CLS vector of the frozen encoder stored at `weights`.
    EncoderCls { weights: PathBuf },
}

fn default_orders() -> Vec<usize> {
    vec![1, 2]
}

impl FeaturizerConfig {
    pub fn hashed(num_buckets: usize, seed: u64) -> Self {
        FeaturizerConfig::HashedNgram { num_buckets, orders: default_orders(), seed }
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: FeaturizerConfig =
            serde_json::from_str(&text).map_err(|e| ClassifierError::Format(format!("{}: {e}", path.display())))?;
        if let FeaturizerConfig::EncoderCls { weights } = &mut cfg {
            if weights.is_relative() {
                if let Some(dir) = path.parent() {
                    *weights = dir.join(&*weights);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            FeaturizerConfig::HashedNgram { num_buckets, orders, .. } => {
                if *num_buckets < 2 {
                    return Err(ClassifierError::Format("num_buckets must be at least 2".into()));
                }
                if orders.is_empty() || orders.contains(&0) {
                    return Err(ClassifierError::Format("n-gram orders must be non-empty and positive".into()));
                }
                Ok(())
            }
            FeaturizerConfig::EncoderCls { .. } => Ok(()),
        }
    }
}

/// Bucket index of one n-gram (tokens joined by a single space).
pub fn ngram_bucket(ngram: &str, num_buckets: usize, seed: u64) -> usize {
    let mut h = Fnv64::with_seed(seed);
    h.write(ngram.as_bytes());
    (h.finish() % num_buckets as u64) as usize
}

/// Raw (unnormalized) hashed n-gram counts.
pub fn hashed_counts(text: &str, num_buckets: usize, orders: &[usize], seed: u64) -> Vec<f64> {
    let tokens: Vec<String> = words(text).collect();
    let mut counts = vec![0.0; num_buckets];
    for &n in orders {
        for window in tokens.windows(n) {
            counts[ngram_bucket(&window.join(" "), num_buckets, seed)] += 1.0;
        }
    }
    counts
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// A featurizer with its resources loaded.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Hashed { num_buckets: usize, orders: Vec<usize>, seed: u64 },
    Encoder { model: Box<EncoderModel>, vocab: Vocabulary },
}

impl Featurizer {
    pub fn from_config(cfg: &FeaturizerConfig) -> Result<Self, ClassifierError> {
        cfg.validate()?;
        match cfg {
            FeaturizerConfig::HashedNgram { num_buckets, orders, seed } => {
                Ok(Featurizer::Hashed { num_buckets: *num_buckets, orders: orders.clone(), seed: *seed })
            }
            FeaturizerConfig::EncoderCls { weights } => {
                if !weights.exists() {
                    return Err(ClassifierError::MissingWeights(weights.display().to_string()));
                }
                let model = EncoderModel::load(weights).map_err(|e| ClassifierError::Format(e.to_string()))?;
                let vocab = model.vocabulary().map_err(|e| ClassifierError::Format(e.to_string()))?;
                Ok(Featurizer::Encoder { model: Box::new(model), vocab })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Hashed { num_buckets, .. } => *num_buckets,
            Featurizer::Encoder { model, .. } => model.config.model_dim,
        }
    }

    pub fn featurize_text(&self, text: &str) -> Result<FeatureVector, ClassifierError> {
        match self {
            Featurizer::Hashed { num_buckets, orders, seed } => {
                let mut v = hashed_counts(text, *num_buckets, orders, *seed);
                l2_normalize(&mut v);
                Ok(FeatureVector(v))
            }
            Featurizer::Encoder { model, vocab } => {
                model.encode_text(text, vocab).map(FeatureVector).map_err(|e| ClassifierError::Format(e.to_string()))
            }
        }
    }

    pub fn featurize(&self, event: &CleanEvent) -> Result<FeatureVector, ClassifierError> {
        self.featurize_text(&event.text)
    }
}
