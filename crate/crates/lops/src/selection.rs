//! Selection of pseudo-label subsets: online LOPS, threshold selection,
//! fixed-count (global and stratified) selection, and the oracle filter.
//!
//! ```
//! use lops::classifier::ClassifierConfig;
//! use lops::corpus::{synth_corpus, vectorize, SynthSpec, Weighting};
//! use lops::selection::{class_quota, lops_select, SelectionParams};
//!
//! let (labels, docs, pseudo) = synth_corpus(&SynthSpec {
//!     n_classes: 2,
//!     n_per_class: 100,
//!     vocab_per_class: 20,
//!     shared_vocab: 10,
//!     doc_len: 12,
//!     flip_rate: 0.3,
//!     rng_seed: 2,
//! })
//! .unwrap();
//! let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
//!
//! let params = SelectionParams { tau_percent: 50.0, max_epochs: 4 };
//! let (report, trace, _model) =
//!     lops_select(&features, &pseudo, &labels, &ClassifierConfig::default(), &params).unwrap();
//!
//! // each class is capped at ceil(tau% of its pseudo-labeled size)
//! for (name, count) in &report.per_class_counts {
//!     let class = labels.index_of(name).unwrap();
//!     let size = pseudo.class_members(class).count();
//!     assert!(*count <= class_quota(size, params.tau_percent));
//! }
//! // everything selected was learnt within the probing epochs
//! for (id, _) in report.selected.iter() {
//!     assert!(trace.per_doc[id].first_learnt.is_some());
//! }
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{train, ClassifierConfig, Observation, TrainedModel};
use crate::confidence::{ConfidenceScores, LearningTrace};
use crate::corpus::{Document, FeatureMatrix, LabelSpace, PseudoLabelSet};
use crate::error::{LopsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Per-class selection fraction in (0, 100].
    pub tau_percent: f64,
    /// Maximum probing epochs T.
    pub max_epochs: usize,
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_percent > 0.0 && self.tau_percent <= 100.0) {
            return Err(LopsError::Validation(format!(
                "tau {} outside (0, 100]",
                self.tau_percent
            )));
        }
        if self.max_epochs < 1 {
            return Err(LopsError::Validation("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-class quota: the count at which the selected fraction first
/// reaches tau%.
pub fn class_quota(class_size: usize, tau_percent: f64) -> usize {
    (tau_percent * class_size as f64 / 100.0).ceil() as usize
}

/// A selected subset with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: String,
    pub params: serde_json::Value,
    pub selected: PseudoLabelSet,
    /// label name -> selected count.
    pub per_class_counts: BTreeMap<String, usize>,
    pub epochs_trained: Option<usize>,
    pub warnings: Vec<String>,
    pub noise: Option<f64>,
    pub coverage: Option<f64>,
}

impl SelectionReport {
    fn new(
        method: &str,
        params: serde_json::Value,
        selected: PseudoLabelSet,
        labels: &LabelSpace,
    ) -> Self {
        let mut per_class_counts = BTreeMap::new();
        for (_, class) in selected.iter() {
            *per_class_counts
                .entry(labels.name(class).to_string())
                .or_insert(0) += 1;
        }
        SelectionReport {
            method: method.to_string(),
            params,
            selected,
            per_class_counts,
            epochs_trained: None,
            warnings: Vec::new(),
            noise: None,
            coverage: None,
        }
    }

    /// Fill noise/coverage from gold labels when available for all
    /// selected docs.
    pub fn attach_metrics(&mut self, docs: &[Document], input_size: usize) {
        let gold: BTreeMap<&str, Option<usize>> = docs
            .iter()
            .map(|d| (d.id.as_str(), d.gold_label))
            .collect();
        let mut wrong = 0usize;
        for (id, label) in self.selected.iter() {
            match gold.get(id) {
                Some(Some(g)) => {
                    if *g != label {
                        wrong += 1;
                    }
                }
                _ => return,
            }
        }
        if !self.selected.is_empty() {
            self.noise = Some(wrong as f64 / self.selected.len() as f64);
        }
        if input_size > 0 {
            self.coverage = Some(self.selected.len() as f64 / input_size as f64);
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "params": self.params,
            "per_class_counts": self.per_class_counts,
            "selected_doc_ids": self.selected.iter().map(|(id, _)| id).collect::<Vec<_>>(),
            "epochs_trained": self.epochs_trained,
            "warnings": self.warnings,
            "noise": self.noise,
            "coverage": self.coverage,
        })
    }
}

/// The online selection state of Algorithm-style LOPS: documents are
/// added in canonical (ascending doc_id) order as soon as they are
/// predicted as their pseudo-label, while their class is below quota.
pub struct OnlineLopsState<'a> {
    pseudo: &'a PseudoLabelSet,
    tau_percent: f64,
    class_sizes: BTreeMap<usize, usize>,
    selected_per_class: BTreeMap<usize, usize>,
    pub selected: HashSet<String>,
    pub epochs_seen: usize,
}

impl<'a> OnlineLopsState<'a> {
    pub fn new(pseudo: &'a PseudoLabelSet, tau_percent: f64) -> Self {
        let mut class_sizes = BTreeMap::new();
        for (_, class) in pseudo.iter() {
            *class_sizes.entry(class).or_insert(0) += 1;
        }
        let selected_per_class = class_sizes.keys().map(|&c| (c, 0)).collect();
        OnlineLopsState {
            pseudo,
            tau_percent,
            class_sizes,
            selected_per_class,
            selected: HashSet::new(),
            epochs_seen: 0,
        }
    }

    fn below_quota(&self, class: usize) -> bool {
        let count = self.selected_per_class[&class] as f64;
        count * 100.0 < self.tau_percent * self.class_sizes[&class] as f64
    }

    /// Process one epoch-end prediction map; returns true when every
    /// class has reached its quota (the break condition).
    pub fn observe_epoch(&mut self, predictions: &BTreeMap<String, usize>) -> bool {
        self.epochs_seen += 1;
        for (id, class) in self.pseudo.iter() {
            if self.selected.contains(id) {
                continue;
            }
            if predictions.get(id) == Some(&class) && self.below_quota(class) {
                self.selected.insert(id.to_string());
                *self.selected_per_class.get_mut(&class).unwrap() += 1;
            }
        }
        self.class_sizes.keys().all(|&c| !self.below_quota(c))
    }

    /// Classes still below quota.
    pub fn under_quota_classes(&self) -> Vec<usize> {
        self.class_sizes
            .keys()
            .copied()
            .filter(|&c| self.below_quota(c))
            .collect()
    }
}

/// Train a probing classifier and select early-learnt documents per
/// class, stopping training as soon as every class reaches tau%.
pub fn lops_select(
    features: &FeatureMatrix,
    pseudo: &PseudoLabelSet,
    label_space: &LabelSpace,
    cfg: &ClassifierConfig,
    params: &SelectionParams,
) -> Result<(SelectionReport, LearningTrace, TrainedModel)> {
    params.validate()?;
    for class in 0..label_space.len() {
        if pseudo.class_size(class) == 0 {
            return Err(LopsError::Validation(format!(
                "class {:?} has no pseudo-labeled documents",
                label_space.name(class)
            )));
        }
    }
    let cfg = ClassifierConfig {
        epochs: params.max_epochs,
        ..cfg.clone()
    };
    let mut state = OnlineLopsState::new(pseudo, params.tau_percent);
    let (model, snapshots) = train(features, pseudo, label_space, &cfg, |snap| {
        if state.observe_epoch(&snap.predictions) {
            Observation::Stop
        } else {
            Observation::Continue
        }
    })?;
    let trace = LearningTrace::from_snapshots(&snapshots, pseudo, params.max_epochs)?;

    let selected = pseudo.subset(&state.selected, "lops");
    let mut report = SelectionReport::new(
        "lops",
        serde_json::json!({ "tau_percent": params.tau_percent, "max_epochs": params.max_epochs }),
        selected,
        label_space,
    );
    report.epochs_trained = Some(state.epochs_seen);
    for class in state.under_quota_classes() {
        report.warnings.push(format!(
            "class {:?} under quota: {} of {} selected after {} epochs",
            label_space.name(class),
            report
                .per_class_counts
                .get(label_space.name(class))
                .copied()
                .unwrap_or(0),
            pseudo.class_size(class),
            state.epochs_seen,
        ));
    }
    Ok((report, trace, model))
}

/// Select exactly {d : kappa(d) > gamma} (strict).
pub fn threshold_select(
    scores: &ConfidenceScores,
    pseudo: &PseudoLabelSet,
    labels: &LabelSpace,
    gamma: f64,
) -> SelectionReport {
    let ids: HashSet<String> = scores
        .scores
        .iter()
        .filter(|(_, &s)| s > gamma)
        .map(|(id, _)| id.clone())
        .collect();
    SelectionReport::new(
        &format!("threshold:{}", scores.function),
        serde_json::json!({ "gamma": gamma, "function": scores.function }),
        pseudo.subset(&ids, format!("threshold:{}", scores.function)),
        labels,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopkMode {
    Global,
    Stratified,
}

/// Canonical ranking: score desc, first-learnt epoch asc when known
/// (never-learnt last), doc_id asc.
fn rank_key_cmp(
    a: (&str, f64, Option<usize>),
    b: (&str, f64, Option<usize>),
) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| {
            let fa = a.2.unwrap_or(usize::MAX);
            let fb = b.2.unwrap_or(usize::MAX);
            fa.cmp(&fb)
        })
        .then_with(|| a.0.cmp(b.0))
}

fn ranked_ids(scores: &ConfidenceScores, ids: impl Iterator<Item = String>) -> Vec<String> {
    let mut items: Vec<(String, f64, Option<usize>)> = ids
        .map(|id| {
            let s = scores.get(&id).unwrap_or(0.0);
            let fl = scores
                .first_learnt
                .as_ref()
                .and_then(|m| m.get(&id).copied())
                .flatten();
            (id, s, fl)
        })
        .collect();
    items.sort_by(|a, b| rank_key_cmp((&a.0, a.1, a.2), (&b.0, b.1, b.2)));
    items.into_iter().map(|(id, _, _)| id).collect()
}

/// Apportion `count` across classes proportionally to class sizes using
/// largest-remainder rounding; remainder ties go to the lower class index.
pub fn apportion(count: usize, class_sizes: &BTreeMap<usize, usize>) -> BTreeMap<usize, usize> {
    let total: usize = class_sizes.values().sum();
    let mut shares: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders: Vec<(usize, usize)> = Vec::new(); // (class, count*n_j mod total)
    let mut assigned = 0usize;
    for (&class, &n) in class_sizes {
        let exact = count * n;
        let q = exact / total;
        shares.insert(class, q);
        assigned += q;
        remainders.push((class, exact % total));
    }
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (class, _) in remainders.into_iter().take(count - assigned) {
        *shares.get_mut(&class).unwrap() += 1;
    }
    shares
}

/// Take the top `count` documents by confidence, either globally or
/// stratified proportionally to class sizes.
pub fn topk_select(
    scores: &ConfidenceScores,
    pseudo: &PseudoLabelSet,
    labels: &LabelSpace,
    count: usize,
    mode: TopkMode,
) -> Result<SelectionReport> {
    if count > pseudo.len() {
        return Err(LopsError::Validation(format!(
            "count {count} exceeds pseudo-label set size {}",
            pseudo.len()
        )));
    }
    let ids: HashSet<String> = match mode {
        TopkMode::Global => ranked_ids(scores, pseudo.iter().map(|(id, _)| id.to_string()))
            .into_iter()
            .take(count)
            .collect(),
        TopkMode::Stratified => {
            let mut class_sizes = BTreeMap::new();
            for (_, class) in pseudo.iter() {
                *class_sizes.entry(class).or_insert(0usize) += 1;
            }
            let shares = apportion(count, &class_sizes);
            let mut out = HashSet::new();
            for (&class, &share) in &shares {
                let members = pseudo.class_members(class).map(str::to_string);
                out.extend(ranked_ids(scores, members).into_iter().take(share));
            }
            out
        }
    };
    Ok(SelectionReport::new(
        &format!("topk:{}", scores.function),
        serde_json::json!({ "count": count, "mode": mode, "function": scores.function }),
        pseudo.subset(&ids, format!("topk:{}", scores.function)),
        labels,
    ))
}

/// Select exactly `counts[j]` top-scored documents from each class.
/// Realizes the count-matched baselines of the self-training loop.
pub fn per_class_topk_select(
    scores: &ConfidenceScores,
    pseudo: &PseudoLabelSet,
    labels: &LabelSpace,
    counts: &BTreeMap<usize, usize>,
    method: &str,
) -> Result<SelectionReport> {
    let mut ids = HashSet::new();
    for (&class, &share) in counts {
        let size = pseudo.class_size(class);
        if share > size {
            return Err(LopsError::Validation(format!(
                "requested {share} docs from class {class} of size {size}"
            )));
        }
        let members = pseudo.class_members(class).map(str::to_string);
        ids.extend(ranked_ids(scores, members).into_iter().take(share));
    }
    Ok(SelectionReport::new(
        method,
        serde_json::json!({ "per_class_counts": counts, "function": scores.function }),
        pseudo.subset(&ids, method),
        labels,
    ))
}

/// The oracle: keep exactly the correctly pseudo-labeled documents.
pub fn optimal_filter(
    pseudo: &PseudoLabelSet,
    docs: &[Document],
    labels: &LabelSpace,
) -> Result<SelectionReport> {
    let gold: BTreeMap<&str, Option<usize>> = docs
        .iter()
        .map(|d| (d.id.as_str(), d.gold_label))
        .collect();
    let mut ids = HashSet::new();
    for (id, label) in pseudo.iter() {
        match gold.get(id) {
            Some(Some(g)) => {
                if *g == label {
                    ids.insert(id.to_string());
                }
            }
            _ => {
                return Err(LopsError::Validation(format!(
                    "doc {id:?} has no gold label"
                )))
            }
        }
    }
    Ok(SelectionReport::new(
        "optimal-filter",
        serde_json::json!({}),
        pseudo.subset(&ids, "optimal-filter"),
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::DocTrace;

    fn labels2() -> LabelSpace {
        LabelSpace::new(vec!["a".into(), "b".into()]).unwrap()
    }

    fn scores_of(entries: &[(&str, f64)]) -> ConfidenceScores {
        ConfidenceScores {
            function: "test".into(),
            scores: entries
                .iter()
                .map(|(id, s)| (id.to_string(), *s))
                .collect(),
            first_learnt: None,
        }
    }

    #[test]
    fn threshold_is_strict() {
        let labels = labels2();
        let pseudo = PseudoLabelSet::from_entries(
            vec![
                ("a".to_string(), 0),
                ("b".to_string(), 0),
                ("c".to_string(), 1),
            ],
            "t",
            &labels,
        )
        .unwrap();
        let scores = scores_of(&[("a", 0.75), ("b", 0.5), ("c", 0.0)]);
        let r = threshold_select(&scores, &pseudo, &labels, 0.5);
        assert_eq!(
            r.selected.iter().map(|(id, _)| id).collect::<Vec<_>>(),
            vec!["a"]
        );
        let empty = threshold_select(&scores, &pseudo, &labels, 1.0);
        assert!(empty.selected.is_empty());
        let full = threshold_select(&scores_of(&[("a", 0.2), ("b", 0.4), ("c", 0.9)]), &pseudo, &labels, 0.0);
        assert_eq!(full.selected.len(), 3);
    }

    #[test]
    fn threshold_monotone_in_gamma() {
        let labels = labels2();
        let pseudo = PseudoLabelSet::from_entries(
            (0..20).map(|i| (format!("d{i:02}"), i % 2)),
            "t",
            &labels,
        )
        .unwrap();
        let entries: Vec<(String, f64)> = (0..20)
            .map(|i| (format!("d{i:02}"), i as f64 / 19.0))
            .collect();
        let scores = ConfidenceScores {
            function: "test".into(),
            scores: entries.into_iter().collect(),
            first_learnt: None,
        };
        let lo = threshold_select(&scores, &pseudo, &labels, 0.3);
        let hi = threshold_select(&scores, &pseudo, &labels, 0.7);
        for (id, _) in hi.selected.iter() {
            assert!(lo.selected.contains(id));
        }
    }

    #[test]
    fn topk_edges() {
        let labels = labels2();
        let pseudo = PseudoLabelSet::from_entries(
            vec![
                ("a".to_string(), 0),
                ("b".to_string(), 0),
                ("c".to_string(), 1),
            ],
            "t",
            &labels,
        )
        .unwrap();
        let scores = scores_of(&[("a", 0.9), ("b", 0.5), ("c", 0.7)]);
        let all = topk_select(&scores, &pseudo, &labels, 3, TopkMode::Global).unwrap();
        assert_eq!(all.selected.len(), 3);
        let none = topk_select(&scores, &pseudo, &labels, 0, TopkMode::Global).unwrap();
        assert!(none.selected.is_empty());
        assert!(topk_select(&scores, &pseudo, &labels, 4, TopkMode::Global).is_err());
    }

    #[test]
    fn stratified_apportionment_largest_remainder() {
        // classes of 10 and 10, count 5: shares (2.5, 2.5), tie to class 0
        let sizes: BTreeMap<usize, usize> = [(0, 10), (1, 10)].into_iter().collect();
        let shares = apportion(5, &sizes);
        assert_eq!(shares[&0], 3);
        assert_eq!(shares[&1], 2);
    }

    #[test]
    fn stratified_topk_counts() {
        let labels = labels2();
        let entries: Vec<(String, usize)> = (0..10)
            .map(|i| (format!("a{i}"), 0))
            .chain((0..10).map(|i| (format!("b{i}"), 1)))
            .collect();
        let pseudo = PseudoLabelSet::from_entries(entries, "t", &labels).unwrap();
        let scores = ConfidenceScores {
            function: "test".into(),
            scores: pseudo.iter().map(|(id, _)| (id.to_string(), 0.5)).collect(),
            first_learnt: None,
        };
        let r = topk_select(&scores, &pseudo, &labels, 5, TopkMode::Stratified).unwrap();
        assert_eq!(r.per_class_counts["a"], 3);
        assert_eq!(r.per_class_counts["b"], 2);
    }

    #[test]
    fn optimal_filter_removes_wrong() {
        let labels = labels2();
        let docs: Vec<Document> = (0..100)
            .map(|i| Document::new(format!("d{i:03}"), "x", Some(0)))
            .collect();
        // 30 wrong labels
        let pseudo = PseudoLabelSet::from_entries(
            (0..100).map(|i| (format!("d{i:03}"), usize::from(i < 30))),
            "t",
            &labels,
        )
        .unwrap();
        let r = optimal_filter(&pseudo, &docs, &labels).unwrap();
        assert_eq!(r.selected.len(), 70);
        let mut r2 = r;
        r2.attach_metrics(&docs, pseudo.len());
        assert_eq!(r2.noise, Some(0.0));
    }

    #[test]
    fn optimal_filter_all_wrong_empty() {
        let labels = labels2();
        let docs: Vec<Document> = (0..5)
            .map(|i| Document::new(format!("d{i}"), "x", Some(0)))
            .collect();
        let pseudo = PseudoLabelSet::from_entries(
            (0..5).map(|i| (format!("d{i}"), 1)),
            "t",
            &labels,
        )
        .unwrap();
        let r = optimal_filter(&pseudo, &docs, &labels).unwrap();
        assert!(r.selected.is_empty());
    }

    /// Hand-built trace driving the online state machine directly.
    fn predictions_from(trace: &BTreeMap<String, DocTrace>, epoch: usize, pseudo: &PseudoLabelSet) -> BTreeMap<String, usize> {
        trace
            .iter()
            .map(|(id, t)| {
                let correct = t.bitmap.get(epoch - 1).copied().unwrap_or(false);
                let label = pseudo.label_of(id).unwrap();
                // wrong prediction encoded as the other class
                (id.clone(), if correct { label } else { (label + 1) % 2 })
            })
            .collect()
    }

    #[test]
    fn online_lops_all_learnt_epoch1() {
        let labels = labels2();
        let entries: Vec<(String, usize)> = (0..10)
            .map(|i| (format!("a{i}"), 0))
            .chain((0..10).map(|i| (format!("b{i}"), 1)))
            .collect();
        let pseudo = PseudoLabelSet::from_entries(entries, "t", &labels).unwrap();
        let trace: BTreeMap<String, DocTrace> = pseudo
            .iter()
            .map(|(id, _)| {
                (
                    id.to_string(),
                    DocTrace {
                        bitmap: vec![true; 4],
                        first_learnt: Some(1),
                    },
                )
            })
            .collect();
        let mut state = OnlineLopsState::new(&pseudo, 50.0);
        let done = state.observe_epoch(&predictions_from(&trace, 1, &pseudo));
        assert!(done);
        assert_eq!(state.epochs_seen, 1);
        let per_class: Vec<usize> = [0, 1]
            .iter()
            .map(|&c| {
                state
                    .selected
                    .iter()
                    .filter(|id| pseudo.label_of(id) == Some(c))
                    .count()
            })
            .collect();
        assert_eq!(per_class, vec![5, 5]);
    }

    #[test]
    fn online_lops_under_quota_warning_state() {
        let labels = labels2();
        // class 0: only 3 of 10 ever learnt; class 1: all learnt
        let entries: Vec<(String, usize)> = (0..10)
            .map(|i| (format!("a{i}"), 0))
            .chain((0..10).map(|i| (format!("b{i}"), 1)))
            .collect();
        let pseudo = PseudoLabelSet::from_entries(entries, "t", &labels).unwrap();
        let trace: BTreeMap<String, DocTrace> = pseudo
            .iter()
            .map(|(id, label)| {
                let learnt = label == 1 || id < "a3";
                (
                    id.to_string(),
                    DocTrace {
                        bitmap: vec![learnt; 4],
                        first_learnt: learnt.then_some(1),
                    },
                )
            })
            .collect();
        let mut state = OnlineLopsState::new(&pseudo, 50.0);
        for epoch in 1..=4 {
            assert!(!state.observe_epoch(&predictions_from(&trace, epoch, &pseudo)));
        }
        assert_eq!(state.under_quota_classes(), vec![0]);
        let class0: usize = state
            .selected
            .iter()
            .filter(|id| pseudo.label_of(id) == Some(0))
            .count();
        assert_eq!(class0, 3);
    }

    #[test]
    fn per_class_quota_bound() {
        assert_eq!(class_quota(10, 50.0), 5);
        assert_eq!(class_quota(10, 42.0), 5); // 4.2 -> 5
        assert_eq!(class_quota(7, 100.0), 7);
        assert_eq!(class_quota(1, 50.0), 1);
    }
}
