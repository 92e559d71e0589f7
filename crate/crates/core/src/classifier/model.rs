use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainingMeta;
use super::{ClassifierError, FeatureVector, FeaturizerConfig};
use crate::encoder::Matrix;
use crate::taxonomy::CategoryId;

pub const MODEL_FORMAT: &str = "eventcat-classifier";
pub const MODEL_VERSION: u32 = 1;

/// `1 / (1 + e^{−z})`, evaluated without overflow for large `|z|`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Multinomial logistic head. Row `c` of `coefficients` is the β vector of
/// class `classes[c]`; the last column is its intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub classes: Vec<CategoryId>,
    pub coefficients: Matrix,
    pub meta: TrainingMeta,
}

impl LogisticHead {
    pub fn feature_dim(&self) -> usize {
        self.coefficients.cols - 1
    }

    /// Raw logits `B · [x; 1]`.
    pub fn scores(&self, x: &FeatureVector) -> Result<Vec<f64>, ClassifierError> {
        let d = self.feature_dim();
        if x.dim() != d {
            return Err(ClassifierError::Dimension { expected: d, got: x.dim() });
        }
        Ok((0..self.coefficients.rows)
            .map(|c| {
                let row = self.coefficients.row(c);
                row[..d].iter().zip(x.values()).map(|(b, v)| b * v).sum::<f64>() + row[d]
            })
            .collect())
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>, ClassifierError> {
        let mut p = self.scores(x)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<CategoryId, ClassifierError> {
        let scores = self.scores(x)?;
        Ok(self.classes[argmax(&scores)])
    }

    fn check(&self) -> Result<(), ClassifierError> {
        if self.classes.len() < 2 {
            return Err(ClassifierError::TooFewClasses(self.classes.len()));
        }
        if self.coefficients.rows != self.classes.len()
            || self.coefficients.data.len() != self.coefficients.rows * self.coefficients.cols
            || self.coefficients.cols < 2
        {
            return Err(ClassifierError::Format(format!(
                "coefficient matrix {:?} does not fit {} classes",
                self.coefficients.shape(),
                self.classes.len()
            )));
        }
        if !self.coefficients.is_finite() {
            return Err(ClassifierError::Format("non-finite coefficients".into()));
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(ClassifierError::Format("duplicate class ids".into()));
        }
        Ok(())
    }
}

/// First index of the maximum; ties resolve to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Head for the children of one first-level category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchHead {
    pub parent: CategoryId,
    pub head: LogisticHead,
}

/// Versioned model container: featurizer, first-level head and optional
/// second-level heads per branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format: String,
    pub version: u32,
    pub featurizer: FeaturizerConfig,
    pub head: LogisticHead,
    #[serde(default)]
    pub branches: Vec<BranchHead>,
}

impl ClassifierModel {
    pub fn new(
        featurizer: FeaturizerConfig,
        head: LogisticHead,
        branches: Vec<BranchHead>,
    ) -> Result<Self, ClassifierError> {
        let model =
            ClassifierModel { format: MODEL_FORMAT.to_string(), version: MODEL_VERSION, featurizer, head, branches };
        model.check()?;
        Ok(model)
    }

    pub fn classes(&self) -> &[CategoryId] {
        &self.head.classes
    }

    fn check(&self) -> Result<(), ClassifierError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(ClassifierError::Format(format!(
                "unsupported model container {} v{}",
                self.format, self.version
            )));
        }
        self.featurizer.validate()?;
        self.head.check()?;
        if let FeaturizerConfig::HashedNgram { num_buckets, .. } = self.featurizer {
            if num_buckets != self.head.feature_dim() {
                return Err(ClassifierError::Dimension { expected: num_buckets, got: self.head.feature_dim() });
            }
        }
        for b in &self.branches {
            b.head.check()?;
            if b.head.feature_dim() != self.head.feature_dim() {
                return Err(ClassifierError::Dimension {
                    expected: self.head.feature_dim(),
                    got: b.head.feature_dim(),
                });
            }
        }
        Ok(())
    }

    pub fn branch(&self, parent: CategoryId) -> Option<&LogisticHead> {
        self.branches.iter().find(|b| b.parent == parent).map(|b| &b.head)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let model: ClassifierModel = serde_json::from_str(text).map_err(|e| ClassifierError::Format(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json()).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
