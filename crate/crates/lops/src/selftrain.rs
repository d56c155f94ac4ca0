//! The full self-training bootstrap: select a subset of the current
//! pseudo-label set, train a classifier on it, predict over all
//! documents, and grow the set with high-confidence predictions.
//!
//! ```
//! use lops::corpus::{synth_corpus, SynthSpec};
//! use lops::selftrain::{self_train, SelfTrainConfig, Selector};
//!
//! let (labels, docs, pseudo) = synth_corpus(&SynthSpec {
//!     n_classes: 2,
//!     n_per_class: 100,
//!     vocab_per_class: 20,
//!     shared_vocab: 10,
//!     doc_len: 12,
//!     flip_rate: 0.3,
//!     rng_seed: 3,
//! })
//! .unwrap();
//!
//! let cfg = SelfTrainConfig { n_its: 2, ..Default::default() };
//! let outcome = self_train(&docs, &labels, &pseudo, &cfg, Selector::Lops).unwrap();
//!
//! assert_eq!(outcome.records.len(), cfg.n_its);
//! // the pseudo-label set only ever grows, and the seed core is immutable
//! assert!(outcome.final_pseudo.len() >= pseudo.len());
//! for (id, label) in pseudo.iter() {
//!     assert_eq!(outcome.final_pseudo.label_of(id), Some(label));
//! }
//! // every document gets a final prediction
//! assert_eq!(outcome.predictions.len(), docs.len());
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{train, ClassifierConfig, Observation, TrainedModel};
use crate::confidence::{
    argmax_predictions, entropy_confidence, probability_score, random_confidence,
    stability_confidence,
};
use crate::corpus::{Document, LabelSpace, PseudoLabelSet, Weighting};
use crate::error::{LopsError, Result};
use crate::eval::{f1_scores, Averaging};
use crate::selection::{lops_select, per_class_topk_select, SelectionParams, SelectionReport};

/// Which subset of the pseudo-label set each iteration trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    Lops,
    Probability,
    Random,
    Entropy,
    Stability,
    /// Standard self-training: train on all of the current set.
    None,
}

impl std::str::FromStr for Selector {
    type Err = LopsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lops" => Ok(Selector::Lops),
            "probability" => Ok(Selector::Probability),
            "random" => Ok(Selector::Random),
            "entropy" => Ok(Selector::Entropy),
            "stability" => Ok(Selector::Stability),
            "none" | "standard" => Ok(Selector::None),
            other => Err(LopsError::Config(format!("unknown selector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub n_its: usize,
    /// Bootstrap probability threshold.
    pub delta: f64,
    pub selection: SelectionParams,
    pub classifier: ClassifierConfig,
    pub rng_seed: u64,
    pub weighting: Weighting,
    pub min_df: usize,
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_its < 1 {
            return Err(LopsError::Config("n_its must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LopsError::Config(format!("delta {} outside (0,1)", self.delta)));
        }
        self.selection.validate()?;
        self.classifier.validate()
    }
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            n_its: 5,
            delta: 0.6,
            selection: SelectionParams {
                tau_percent: 50.0,
                max_epochs: 4,
            },
            classifier: ClassifierConfig::default(),
            rng_seed: 0,
            weighting: Weighting::TfIdf,
            min_df: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pseudo_size_before: usize,
    pub pseudo_size_after: usize,
    pub selected_size: usize,
    pub selection: serde_json::Value,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Noise/coverage of the selected subset, when gold labels exist.
    pub selection_noise: Option<f64>,
    pub selection_coverage: Option<f64>,
}

pub struct SelfTrainOutcome {
    /// Final model's argmax label and max probability per document.
    pub predictions: BTreeMap<String, (usize, f64)>,
    pub records: Vec<IterationRecord>,
    pub final_model: TrainedModel,
    /// The grown pseudo-label set after the last iteration.
    pub final_pseudo: PseudoLabelSet,
}

/// splitmix64, used to fan the master seed out into per-component
/// sub-seeds so each stage is independently reproducible.
pub fn sub_seed(master: u64, tag: &str, iteration: usize) -> u64 {
    let mut z = master
        .wrapping_add(iteration as u64)
        .wrapping_add(tag.bytes().fold(0u64, |h, b| {
            h.wrapping_mul(0x100000001b3).wrapping_add(b as u64)
        }));
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn per_class_counts(selected: &PseudoLabelSet) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for (_, class) in selected.iter() {
        *counts.entry(class).or_insert(0usize) += 1;
    }
    counts
}

fn check_selection_covers(
    selection: &SelectionReport,
    pseudo: &PseudoLabelSet,
    labels: &LabelSpace,
    iteration: usize,
) -> Result<()> {
    for class in pseudo.classes() {
        if selection.selected.class_size(class) == 0 {
            return Err(LopsError::Data(format!(
                "iteration {iteration}: selection emptied class {:?}",
                labels.name(class)
            )));
        }
    }
    Ok(())
}

/// Run the self-training loop over `docs`, starting from
/// `initial_pseudo`. Gold labels, when present, drive per-iteration
/// metrics but never influence the run.
pub fn self_train(
    docs: &[Document],
    labels: &LabelSpace,
    initial_pseudo: &PseudoLabelSet,
    cfg: &SelfTrainConfig,
    selector: Selector,
) -> Result<SelfTrainOutcome> {
    self_train_with(docs, labels, initial_pseudo, cfg, selector, |_| Ok(()))
}

/// [`self_train`] with a per-iteration callback, so callers can persist
/// partial outputs as the loop progresses.
pub fn self_train_with(
    docs: &[Document],
    labels: &LabelSpace,
    initial_pseudo: &PseudoLabelSet,
    cfg: &SelfTrainConfig,
    selector: Selector,
    mut on_iteration: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    if initial_pseudo.is_empty() || initial_pseudo.classes().len() < 2 {
        return Err(LopsError::Validation(
            "initial pseudo-label set needs >= 2 classes".into(),
        ));
    }
    let features = crate::corpus::vectorize(docs, cfg.weighting, cfg.min_df)?;
    let gold: BTreeMap<String, usize> = docs
        .iter()
        .filter_map(|d| d.gold_label.map(|g| (d.id.clone(), g)))
        .collect();
    let gold_complete = gold.len() == docs.len();

    let mut pseudo = initial_pseudo.clone();
    let mut records = Vec::with_capacity(cfg.n_its);
    let mut last_model: Option<TrainedModel> = None;
    let mut last_preds: BTreeMap<String, (usize, f64)> = BTreeMap::new();

    for it in 1..=cfg.n_its {
        let probe_cfg = ClassifierConfig {
            rng_seed: sub_seed(cfg.rng_seed, "probe", it),
            ..cfg.classifier.clone()
        };
        let selection = match selector {
            Selector::None => {
                let mut report = SelectionReport {
                    method: "standard".into(),
                    params: serde_json::json!({}),
                    selected: pseudo.clone(),
                    per_class_counts: pseudo
                        .classes()
                        .into_iter()
                        .map(|c| (labels.name(c).to_string(), pseudo.class_size(c)))
                        .collect(),
                    epochs_trained: None,
                    warnings: vec![],
                    noise: None,
                    coverage: None,
                };
                report.attach_metrics(docs, pseudo.len());
                report
            }
            _ => {
                let (lops_report, trace, probe_model) =
                    lops_select(&features, &pseudo, labels, &probe_cfg, &cfg.selection)?;
                let mut report = match selector {
                    Selector::Lops => lops_report,
                    other => {
                        // count-matched baselines reuse the LOPS trace
                        let counts = per_class_counts(&lops_report.selected);
                        let scores = match other {
                            Selector::Probability => {
                                probability_score(&probe_model, &features, &pseudo)?
                            }
                            Selector::Entropy => {
                                entropy_confidence(&probe_model, &features, &pseudo)?
                            }
                            Selector::Stability => stability_confidence(&trace, &pseudo)?,
                            Selector::Random => {
                                random_confidence(&pseudo, sub_seed(cfg.rng_seed, "random", it))
                            }
                            _ => unreachable!(),
                        };
                        per_class_topk_select(
                            &scores,
                            &pseudo,
                            labels,
                            &counts,
                            &format!("count-matched:{}", scores.function),
                        )?
                    }
                };
                report.attach_metrics(docs, pseudo.len());
                report
            }
        };
        check_selection_covers(&selection, &pseudo, labels, it)?;

        let final_cfg = ClassifierConfig {
            rng_seed: sub_seed(cfg.rng_seed, "final", it),
            ..cfg.classifier.clone()
        };
        let (model, _) = train(&features, &selection.selected, labels, &final_cfg, |_| {
            Observation::Continue
        })?;
        let preds = argmax_predictions(&model, &features)?;

        let size_before = pseudo.len();
        for (id, &(class, prob)) in &preds {
            if prob > cfg.delta {
                pseudo.insert_if_absent(id, class);
            }
        }
        let size_after = pseudo.len();

        let (micro, macro_) = if gold_complete {
            let pred_labels: BTreeMap<String, usize> =
                preds.iter().map(|(id, &(c, _))| (id.clone(), c)).collect();
            (
                Some(f1_scores(&pred_labels, &gold, labels, Averaging::Micro)?),
                Some(f1_scores(&pred_labels, &gold, labels, Averaging::Macro)?),
            )
        } else {
            (None, None)
        };

        records.push(IterationRecord {
            iteration: it,
            pseudo_size_before: size_before,
            pseudo_size_after: size_after,
            selected_size: selection.selected.len(),
            selection_noise: selection.noise,
            selection_coverage: selection.coverage,
            selection: selection.to_json(),
            micro_f1: micro,
            macro_f1: macro_,
        });
        on_iteration(records.last().unwrap())?;
        last_preds = preds;
        last_model = Some(model);
    }

    Ok(SelfTrainOutcome {
        predictions: last_preds,
        records,
        final_model: last_model.expect("n_its >= 1"),
        final_pseudo: pseudo,
    })
}
