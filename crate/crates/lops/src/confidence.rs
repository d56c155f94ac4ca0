//! Confidence functions kappa: (x, w(x)) -> [0,1].
//!
//! Learning order negates and scales the first-learnt epoch so that
//! higher confidence means a higher chance of a correct pseudo-label.
//!
//! ```
//! use lops::classifier::{train, ClassifierConfig, Observation};
//! use lops::confidence::{learning_order, LearningTrace};
//! use lops::corpus::{synth_corpus, vectorize, SynthSpec, Weighting};
//!
//! let (labels, docs, pseudo) = synth_corpus(&SynthSpec {
//!     n_classes: 2,
//!     n_per_class: 50,
//!     vocab_per_class: 20,
//!     shared_vocab: 10,
//!     doc_len: 12,
//!     flip_rate: 0.2,
//!     rng_seed: 1,
//! })
//! .unwrap();
//! let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
//!
//! let cfg = ClassifierConfig::default(); // T = 4 probing epochs
//! let (_model, snapshots) =
//!     train(&features, &pseudo, &labels, &cfg, |_| Observation::Continue).unwrap();
//! let trace = LearningTrace::from_snapshots(&snapshots, &pseudo, cfg.epochs).unwrap();
//!
//! let scores = learning_order(&trace, &pseudo).unwrap();
//! for (id, s) in &scores.scores {
//!     match trace.per_doc[id].first_learnt {
//!         Some(t) => assert_eq!(*s, 1.0 - t as f64 / cfg.epochs as f64),
//!         None => assert_eq!(*s, 0.0),
//!     }
//! }
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, predict_proba, EpochSnapshot, TrainedModel};
use crate::corpus::{FeatureMatrix, PseudoLabelSet};
use crate::error::{LopsError, Result};

/// Per-document learning history from probing training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTrace {
    /// prediction == pseudo-label at each completed epoch end.
    pub bitmap: Vec<bool>,
    /// First epoch (1-based) where the bitmap is true; None = never learnt.
    pub first_learnt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningTrace {
    pub per_doc: BTreeMap<String, DocTrace>,
    /// Configured total number of epochs T.
    pub epochs_total: usize,
    /// Number of epochs actually completed (<= T when stopped early).
    pub epochs_completed: usize,
}

impl LearningTrace {
    /// Build from epoch snapshots emitted by the trainer.
    pub fn from_snapshots(
        snapshots: &[EpochSnapshot],
        pseudo: &PseudoLabelSet,
        epochs_total: usize,
    ) -> Result<Self> {
        let mut per_doc: BTreeMap<String, DocTrace> = pseudo
            .iter()
            .map(|(id, _)| {
                (
                    id.to_string(),
                    DocTrace {
                        bitmap: Vec::with_capacity(snapshots.len()),
                        first_learnt: None,
                    },
                )
            })
            .collect();
        for snap in snapshots {
            for (id, label) in pseudo.iter() {
                let pred = *snap.predictions.get(id).ok_or_else(|| {
                    LopsError::Validation(format!("snapshot {} missing doc {id:?}", snap.epoch))
                })?;
                let trace = per_doc.get_mut(id).unwrap();
                let correct = pred == label;
                trace.bitmap.push(correct);
                if correct && trace.first_learnt.is_none() {
                    trace.first_learnt = Some(snap.epoch);
                }
            }
        }
        Ok(LearningTrace {
            per_doc,
            epochs_total,
            epochs_completed: snapshots.len(),
        })
    }

    fn check_covers(&self, pseudo: &PseudoLabelSet) -> Result<()> {
        if self.per_doc.len() != pseudo.len()
            || !pseudo.iter().all(|(id, _)| self.per_doc.contains_key(id))
        {
            return Err(LopsError::Validation(
                "learning trace does not cover the pseudo-label set".into(),
            ));
        }
        Ok(())
    }
}

/// Scores in [0,1] under a named confidence function, one per
/// pseudo-labeled document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceScores {
    pub function: String,
    pub scores: BTreeMap<String, f64>,
    /// First-learnt epochs when the function derives from a trace;
    /// selection uses these as a secondary sort key.
    pub first_learnt: Option<BTreeMap<String, Option<usize>>>,
}

impl ConfidenceScores {
    pub fn get(&self, doc_id: &str) -> Option<f64> {
        self.scores.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Write as CSV: doc_id, pseudo_label, function, score.
    pub fn write_csv<W: std::io::Write>(
        &self,
        out: &mut W,
        pseudo: &PseudoLabelSet,
        labels: &crate::corpus::LabelSpace,
    ) -> Result<()> {
        writeln!(out, "doc_id,pseudo_label,function,score")
            .map_err(|e| LopsError::io("<writer>", e))?;
        for (id, score) in &self.scores {
            let label = pseudo
                .label_of(id)
                .map(|l| labels.name(l).to_string())
                .unwrap_or_default();
            writeln!(out, "{id},{label},{},{score}", self.function)
                .map_err(|e| LopsError::io("<writer>", e))?;
        }
        Ok(())
    }
}

/// eta(x, w(x)) = 1 - first_learnt/T; never-learnt docs score 0.
pub fn learning_order(trace: &LearningTrace, pseudo: &PseudoLabelSet) -> Result<ConfidenceScores> {
    trace.check_covers(pseudo)?;
    let t_total = trace.epochs_total as f64;
    let mut scores = BTreeMap::new();
    let mut first = BTreeMap::new();
    for (id, doc) in &trace.per_doc {
        let score = match doc.first_learnt {
            Some(t) => 1.0 - t as f64 / t_total,
            None => 0.0,
        };
        scores.insert(id.clone(), score);
        first.insert(id.clone(), doc.first_learnt);
    }
    Ok(ConfidenceScores {
        function: "learning_order".into(),
        scores,
        first_learnt: Some(first),
    })
}

/// Predicted probability of the document's own pseudo-label.
pub fn probability_score(
    model: &TrainedModel,
    features: &FeatureMatrix,
    pseudo: &PseudoLabelSet,
) -> Result<ConfidenceScores> {
    let probs = predict_proba(model, features)?;
    let mut scores = BTreeMap::new();
    for (id, label) in pseudo.iter() {
        let row = features
            .row_position(id)
            .ok_or_else(|| LopsError::Validation(format!("no feature row for doc {id:?}")))?;
        scores.insert(id.to_string(), probs[row][label]);
    }
    Ok(ConfidenceScores {
        function: "probability".into(),
        scores,
        first_learnt: None,
    })
}

/// 1 - H(p)/ln M over the full predictive distribution.
pub fn entropy_confidence(
    model: &TrainedModel,
    features: &FeatureMatrix,
    pseudo: &PseudoLabelSet,
) -> Result<ConfidenceScores> {
    let probs = predict_proba(model, features)?;
    let ln_m = (model.n_classes() as f64).ln();
    let mut scores = BTreeMap::new();
    for (id, _) in pseudo.iter() {
        let row = features
            .row_position(id)
            .ok_or_else(|| LopsError::Validation(format!("no feature row for doc {id:?}")))?;
        let h: f64 = probs[row]
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        scores.insert(id.to_string(), (1.0 - h / ln_m).clamp(0.0, 1.0));
    }
    Ok(ConfidenceScores {
        function: "entropy".into(),
        scores,
        first_learnt: None,
    })
}

/// Fraction of epoch ends where the prediction matched the pseudo-label.
pub fn stability_confidence(
    trace: &LearningTrace,
    pseudo: &PseudoLabelSet,
) -> Result<ConfidenceScores> {
    trace.check_covers(pseudo)?;
    if trace.epochs_completed == 0 {
        return Err(LopsError::Validation("stability needs >= 1 completed epoch".into()));
    }
    let mut scores = BTreeMap::new();
    for (id, doc) in &trace.per_doc {
        let correct = doc.bitmap.iter().filter(|&&b| b).count();
        scores.insert(id.clone(), correct as f64 / doc.bitmap.len() as f64);
    }
    Ok(ConfidenceScores {
        function: "stability".into(),
        scores,
        first_learnt: None,
    })
}

/// I.i.d. uniform scores, deterministic per seed. Combined with
/// stratified fixed-count selection this realizes the random baseline.
pub fn random_confidence(pseudo: &PseudoLabelSet, rng_seed: u64) -> ConfidenceScores {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let scores = pseudo
        .iter()
        .map(|(id, _)| (id.to_string(), rng.gen::<f64>()))
        .collect();
    ConfidenceScores {
        function: "random".into(),
        scores,
        first_learnt: None,
    }
}

/// Scores of the max class for every document row (used for bootstrap
/// augmentation and final predictions).
pub fn argmax_predictions(
    model: &TrainedModel,
    features: &FeatureMatrix,
) -> Result<BTreeMap<String, (usize, f64)>> {
    let probs = predict_proba(model, features)?;
    Ok(features
        .doc_ids
        .iter()
        .zip(&probs)
        .map(|(id, p)| {
            let j = argmax(p);
            (id.clone(), (j, p[j]))
        })
        .collect())
}
