//! Probabilistic classifier contract plus the reference implementation:
//! multinomial logistic regression over sparse rows, trained by
//! mini-batch SGD with epoch-end snapshots.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureMatrix, LabelSpace, PseudoLabelSet};
use crate::error::{LopsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub rng_seed: u64,
    pub shuffle_per_epoch: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.1,
            l2_penalty: 0.0,
            rng_seed: 0,
            shuffle_per_epoch: true,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(LopsError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(LopsError::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(LopsError::Config("learning_rate must be > 0".into()));
        }
        if self.l2_penalty < 0.0 {
            return Err(LopsError::Config("l2_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// State of the model after an epoch-end evaluation over the tracked set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochSnapshot {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Argmax prediction per tracked doc.
    pub predictions: BTreeMap<String, usize>,
    /// Predicted probability of each doc's own pseudo-label.
    pub label_probs: BTreeMap<String, f64>,
}

/// Linear softmax model. Immutable after training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub labels: LabelSpace,
    pub vocabulary: Vec<String>,
    /// class x term weight matrix.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub config: ClassifierConfig,
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    fn check_compatible(&self, features: &FeatureMatrix) -> Result<()> {
        if features.vocabulary != self.vocabulary {
            return Err(LopsError::Validation(
                "feature matrix vocabulary does not match model vocabulary".into(),
            ));
        }
        Ok(())
    }

    fn logits(&self, row: &[(u32, f64)]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (j, zj) in z.iter_mut().enumerate() {
            for &(col, w) in row {
                *zj += self.weights[j][col as usize] * w;
            }
        }
        z
    }

    /// Softmax probabilities for one sparse row.
    pub fn predict_row(&self, row: &[(u32, f64)]) -> Vec<f64> {
        softmax(&self.logits(row))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| LopsError::Data(format!("model serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| LopsError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| LopsError::io(path.display().to_string(), e))?;
        serde_json::from_str(&raw).map_err(|e| LopsError::Data(format!("bad model file: {e}")))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Argmax with ties broken by lowest class index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = j;
        }
    }
    best
}

/// Predict probability vectors for every row of `features`, in row order.
pub fn predict_proba(model: &TrainedModel, features: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    model.check_compatible(features)?;
    Ok(features.rows.iter().map(|r| model.predict_row(r)).collect())
}

/// What the epoch observer tells the trainer to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Continue,
    /// Halt after the current epoch's snapshot.
    Stop,
}

/// Train the model with mini-batch SGD on softmax cross-entropy.
///
/// At the end of each epoch the current model is evaluated on the
/// tracked set (the training set) and the resulting [`EpochSnapshot`]
/// is appended and passed to `observer`, which may stop training early.
pub fn train<F>(
    features: &FeatureMatrix,
    labels: &PseudoLabelSet,
    label_space: &LabelSpace,
    cfg: &ClassifierConfig,
    mut observer: F,
) -> Result<(TrainedModel, Vec<EpochSnapshot>)>
where
    F: FnMut(&EpochSnapshot) -> Observation,
{
    cfg.validate()?;
    if labels.classes().len() < 2 {
        return Err(LopsError::Validation(
            "training needs at least 2 distinct labels".into(),
        ));
    }
    // (row index, class) pairs in ascending doc_id order
    let mut samples: Vec<(usize, usize)> = Vec::with_capacity(labels.len());
    let mut tracked: Vec<(String, usize, usize)> = Vec::with_capacity(labels.len());
    for (id, class) in labels.iter() {
        let row = features
            .row_position(id)
            .ok_or_else(|| LopsError::Validation(format!("no feature row for doc {id:?}")))?;
        samples.push((row, class));
        tracked.push((id.to_string(), row, class));
    }

    let n_classes = label_space.len();
    let n_terms = features.n_terms();
    let mut model = TrainedModel {
        labels: label_space.clone(),
        vocabulary: features.vocabulary.clone(),
        weights: vec![vec![0.0; n_terms]; n_classes],
        bias: vec![0.0; n_classes],
        config: cfg.clone(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut snapshots = Vec::new();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_per_epoch {
            order.shuffle(&mut rng);
        }
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = cfg.learning_rate / batch.len() as f64;
            let mut bias_grad = vec![0.0; n_classes];
            // accumulate sparse weight updates per class
            let mut weight_grad: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_classes];
            let mut loss = 0.0;
            for &s in batch {
                let (row_idx, class) = samples[s];
                let row = &features.rows[row_idx];
                let probs = model.predict_row(row);
                loss -= probs[class].max(1e-300).ln();
                for j in 0..n_classes {
                    let err = probs[j] - if j == class { 1.0 } else { 0.0 };
                    bias_grad[j] += err;
                    for &(col, x) in row.iter() {
                        *weight_grad[j].entry(col).or_insert(0.0) += err * x;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(LopsError::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            let decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
            for j in 0..n_classes {
                model.bias[j] -= scale * bias_grad[j];
                if cfg.l2_penalty > 0.0 {
                    for w in model.weights[j].iter_mut() {
                        *w *= decay;
                    }
                }
                for (&col, &g) in &weight_grad[j] {
                    model.weights[j][col as usize] -= scale * g;
                }
            }
        }

        let mut predictions = BTreeMap::new();
        let mut label_probs = BTreeMap::new();
        for (id, row_idx, class) in &tracked {
            let probs = model.predict_row(&features.rows[*row_idx]);
            predictions.insert(id.clone(), argmax(&probs));
            label_probs.insert(id.clone(), probs[*class]);
        }
        let snapshot = EpochSnapshot {
            epoch,
            predictions,
            label_probs,
        };
        let action = observer(&snapshot);
        snapshots.push(snapshot);
        if action == Observation::Stop {
            break;
        }
    }
    Ok((model, snapshots))
}

/// Mean analytic gradient of softmax cross-entropy plus L2 penalty over
/// a labeled set: returns (weight gradient, bias gradient, loss), where
/// loss = mean CE + 0.5 * l2 * ||W||^2.
pub fn full_gradient(
    model: &TrainedModel,
    features: &FeatureMatrix,
    labels: &PseudoLabelSet,
    l2_penalty: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let n_classes = model.n_classes();
    let n_terms = model.vocabulary.len();
    let mut wgrad = vec![vec![0.0; n_terms]; n_classes];
    let mut bgrad = vec![0.0; n_classes];
    let mut loss = 0.0;
    let n = labels.len() as f64;
    for (id, class) in labels.iter() {
        let row = features
            .row_of(id)
            .ok_or_else(|| LopsError::Validation(format!("no feature row for doc {id:?}")))?;
        let probs = model.predict_row(row);
        loss -= probs[class].max(1e-300).ln();
        for j in 0..n_classes {
            let err = probs[j] - if j == class { 1.0 } else { 0.0 };
            bgrad[j] += err / n;
            for &(col, x) in row {
                wgrad[j][col as usize] += err * x / n;
            }
        }
    }
    loss /= n;
    for j in 0..n_classes {
        for (g, &w) in wgrad[j].iter_mut().zip(&model.weights[j]) {
            *g += l2_penalty * w;
        }
        loss += 0.5 * l2_penalty * model.weights[j].iter().map(|w| w * w).sum::<f64>();
    }
    Ok((wgrad, bgrad, loss))
}

/// Softmax cross-entropy loss with L2 penalty over a labeled set.
/// Used by the monotone-loss check; shares no gradient code with `train`.
pub fn dataset_loss(
    model: &TrainedModel,
    features: &FeatureMatrix,
    labels: &PseudoLabelSet,
) -> f64 {
    let mut loss = 0.0;
    let mut n = 0usize;
    for (id, class) in labels.iter() {
        let row = features.row_of(id).expect("feature row");
        let probs = model.predict_row(row);
        loss -= probs[class].max(1e-300).ln();
        n += 1;
    }
    loss / n as f64
}
