//! Featurization, the multinomial logistic head and the rule cascade.

mod cascade;
mod features;
mod model;
mod train;

use std::collections::BTreeMap;

use thiserror::Error;

pub use cascade::{Cascade, Method, Prediction};
pub use features::{hashed_counts, l2_normalize, ngram_bucket, FeatureVector, Featurizer, FeaturizerConfig};
pub use model::{argmax, logistic, BranchHead, ClassifierModel, LogisticHead, MODEL_FORMAT, MODEL_VERSION};
pub use train::{loss, loss_and_gradient, resolve_class_weights, train, ClassWeights, TrainParams, TrainingMeta};

use crate::taxonomy::{CategoryId, Taxonomy};
use crate::textprep::CleanEvent;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no training examples")]
    EmptyClass(CategoryId),
    #[error("label {0} is not one of the model classes")]
    UnknownLabel(CategoryId),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid model: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error("encoder weight file not found: {0}")]
    MissingWeights(String),
}

/// Trains the first-level head on every labeled event, plus a head for each
/// first-level branch whose events carry at least two distinct second-level
/// labels. Unlabeled events are ignored.
pub fn fit_model(
    events: &[CleanEvent],
    featurizer_config: &FeaturizerConfig,
    taxonomy: &Taxonomy,
    params: &TrainParams,
) -> Result<ClassifierModel, ClassifierError> {
    let featurizer = Featurizer::from_config(featurizer_config)?;
    let mut first = Vec::new();
    let mut second: BTreeMap<CategoryId, Vec<(FeatureVector, CategoryId)>> = BTreeMap::new();
    for event in events {
        let Some(label) = event.label else { continue };
        let path = taxonomy.path(label).map_err(|_| ClassifierError::UnknownLabel(label))?;
        let x = featurizer.featurize(event)?;
        if let Some(child) = path.get(1) {
            second.entry(path[0].id).or_default().push((x.clone(), child.id));
        }
        first.push((x, path[0].id));
    }
    let head = train(&first, &distinct(&first), params)?;
    let mut branches = Vec::new();
    for (parent, data) in second {
        let classes = distinct(&data);
        if classes.len() >= 2 {
            branches.push(BranchHead { parent, head: train(&data, &classes, params)? });
        }
    }
    ClassifierModel::new(featurizer_config.clone(), head, branches)
}

fn distinct(data: &[(FeatureVector, CategoryId)]) -> Vec<CategoryId> {
    let mut classes: Vec<CategoryId> = data.iter().map(|(_, c)| *c).collect();
    classes.sort();
    classes.dedup();
    classes
}
