//! Mini-batch gradient descent on class-weighted softmax cross-entropy.
//!
//! For a batch `S` with per-example weights `w_i = class_weight[y_i]` and
//! `x̃ = [x; 1]`:
//!
//! ```text
//! L(B) = Σ_{i∈S} w_i · (−log softmax(B x̃_i)[y_i]) / Σ_{i∈S} w_i  +  (λ/2) ‖B[:, :d]‖²
//! ∂L/∂B_c = Σ_{i∈S} w_i (p_ic − [y_i = c]) x̃_iᵀ / Σ w_i  +  λ B_c[:d]
//! ```
//!
//! The intercept column is not penalized. Normalizing by the weight sum
//! makes the objective invariant to a common rescaling of all class weights.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax_in_place, LogisticHead};
use super::{ClassifierError, FeatureVector};
use crate::encoder::Matrix;
use crate::taxonomy::CategoryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "weights")]
pub enum ClassWeights {
    /// Inverse class frequency, `n / (C · n_c)`.
    Auto,
    /// All ones.
    None,
    Explicit(BTreeMap<CategoryId, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub l2: f64,
    pub class_weights: ClassWeights,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 40,
            learning_rate: 0.5,
            batch_size: 32,
            l2: 1e-4,
            class_weights: ClassWeights::Auto,
            seed: 0,
        }
    }
}

/// Training metadata stored alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub params: TrainParams,
    /// Resolved per-class weights, in class order.
    pub class_weights: Vec<f64>,
    pub examples: usize,
    /// Full-data objective after each epoch.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
}

/// Nonzero entries of one feature vector plus its class index.
#[derive(Debug, Clone)]
pub(crate) struct SparseExample {
    entries: Vec<(usize, f64)>,
    class: usize,
}

impl SparseExample {
    pub(crate) fn new(x: &[f64], class: usize) -> Self {
        let entries = x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        SparseExample { entries, class }
    }
}

fn logits(b: &Matrix, ex: &SparseExample, out: &mut [f64]) {
    let d = b.cols - 1;
    for (c, o) in out.iter_mut().enumerate() {
        let row = b.row(c);
        *o = row[d] + ex.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
    }
}

fn objective_and_gradient(
    b: &Matrix,
    batch: &[&SparseExample],
    weights: &[f64],
    l2: f64,
    mut grad: Option<&mut Matrix>,
) -> f64 {
    let classes = b.rows;
    let d = b.cols - 1;
    if let Some(g) = grad.as_deref_mut() {
        g.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let total_w: f64 = batch.iter().map(|ex| weights[ex.class]).sum();
    let mut probs = vec![0.0; classes];
    let mut loss = 0.0;
    for ex in batch {
        logits(b, ex, &mut probs);
        let log_norm = log_sum_exp(&probs);
        let w = weights[ex.class] / total_w;
        loss += w * (log_norm - probs[ex.class]);
        if let Some(g) = grad.as_deref_mut() {
            softmax_in_place(&mut probs);
            for (c, &p) in probs.iter().enumerate() {
                let coef = w * (p - if c == ex.class { 1.0 } else { 0.0 });
                if coef == 0.0 {
                    continue;
                }
                let row = g.row_mut(c);
                for &(j, v) in &ex.entries {
                    row[j] += coef * v;
                }
                row[d] += coef;
            }
        }
    }
    if l2 != 0.0 {
        let mut penalty = 0.0;
        for c in 0..classes {
            let row = b.row(c);
            penalty += row[..d].iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad.as_deref_mut() {
                for (gv, bv) in g.row_mut(c)[..d].iter_mut().zip(&row[..d]) {
                    *gv += l2 * bv;
                }
            }
        }
        loss += 0.5 * l2 * penalty;
    }
    loss
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn class_indices(data: &[(FeatureVector, CategoryId)], classes: &[CategoryId]) -> Result<Vec<usize>, ClassifierError> {
    data.iter().map(|(_, y)| classes.iter().position(|c| c == y).ok_or(ClassifierError::UnknownLabel(*y))).collect()
}

/// Objective and its gradient at `b` for `batch`; exposed for gradient checks.
pub fn loss_and_gradient(
    b: &Matrix,
    batch: &[(FeatureVector, CategoryId)],
    classes: &[CategoryId],
    class_weights: &[f64],
    l2: f64,
) -> Result<(f64, Matrix), ClassifierError> {
    let idx = class_indices(batch, classes)?;
    let examples: Vec<SparseExample> =
        batch.iter().zip(idx).map(|((x, _), c)| SparseExample::new(x.values(), c)).collect();
    let refs: Vec<&SparseExample> = examples.iter().collect();
    let mut grad = Matrix::zeros(b.rows, b.cols);
    let loss = objective_and_gradient(b, &refs, class_weights, l2, Some(&mut grad));
    Ok((loss, grad))
}

/// Objective only.
pub fn loss(
    b: &Matrix,
    batch: &[(FeatureVector, CategoryId)],
    classes: &[CategoryId],
    class_weights: &[f64],
    l2: f64,
) -> Result<f64, ClassifierError> {
    let idx = class_indices(batch, classes)?;
    let examples: Vec<SparseExample> =
        batch.iter().zip(idx).map(|((x, _), c)| SparseExample::new(x.values(), c)).collect();
    let refs: Vec<&SparseExample> = examples.iter().collect();
    Ok(objective_and_gradient(b, &refs, class_weights, l2, None))
}

/// Per-class weights in `classes` order.
pub fn resolve_class_weights(
    mode: &ClassWeights,
    classes: &[CategoryId],
    counts: &[usize],
) -> Result<Vec<f64>, ClassifierError> {
    let n: usize = counts.iter().sum();
    let weights: Vec<f64> = match mode {
        ClassWeights::None => vec![1.0; classes.len()],
        ClassWeights::Auto => counts.iter().map(|&nc| n as f64 / (classes.len() as f64 * nc as f64)).collect(),
        ClassWeights::Explicit(map) => classes.iter().map(|c| map.get(c).copied().unwrap_or(1.0)).collect(),
    };
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(ClassifierError::Format("class weights must be positive and finite".into()));
    }
    Ok(weights)
}

/// Fits a multinomial logistic head from zero-initialized coefficients.
/// Shuffling is seeded, so identical inputs give identical coefficients.
pub fn train(
    data: &[(FeatureVector, CategoryId)],
    classes: &[CategoryId],
    params: &TrainParams,
) -> Result<LogisticHead, ClassifierError> {
    if classes.len() < 2 {
        return Err(ClassifierError::TooFewClasses(classes.len()));
    }
    let dim = data.first().map(|(x, _)| x.dim()).ok_or(ClassifierError::EmptyClass(classes[0]))?;
    if let Some((x, _)) = data.iter().find(|(x, _)| x.dim() != dim) {
        return Err(ClassifierError::Dimension { expected: dim, got: x.dim() });
    }
    let idx = class_indices(data, classes)?;
    let mut counts = vec![0usize; classes.len()];
    for &c in &idx {
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::EmptyClass(classes[empty]));
    }
    let class_weights = resolve_class_weights(&params.class_weights, classes, &counts)?;

    let examples: Vec<SparseExample> =
        data.iter().zip(&idx).map(|((x, _), &c)| SparseExample::new(x.values(), c)).collect();
    let all: Vec<&SparseExample> = examples.iter().collect();
    let batch_size = if params.batch_size == 0 { examples.len() } else { params.batch_size };

    let mut b = Matrix::zeros(classes.len(), dim + 1);
    let mut grad = Matrix::zeros(classes.len(), dim + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&SparseExample> = chunk.iter().map(|&i| &examples[i]).collect();
            objective_and_gradient(&b, &batch, &class_weights, params.l2, Some(&mut grad));
            for (bv, gv) in b.data.iter_mut().zip(&grad.data) {
                *bv -= params.learning_rate * gv;
            }
        }
        let epoch_loss = objective_and_gradient(&b, &all, &class_weights, params.l2, None);
        if !epoch_loss.is_finite() {
            return Err(ClassifierError::Diverged { epoch: epoch + 1 });
        }
        history.push(epoch_loss);
    }
    let final_loss = match history.last() {
        Some(&l) => l,
        None => objective_and_gradient(&b, &all, &class_weights, params.l2, None),
    };
    Ok(LogisticHead {
        classes: classes.to_vec(),
        coefficients: b,
        meta: TrainingMeta {
            params: params.clone(),
            class_weights,
            examples: data.len(),
            loss_history: history,
            final_loss,
        },
    })
}
