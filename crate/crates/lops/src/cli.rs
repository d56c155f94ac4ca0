//! Command implementations behind the `lops` binary. Every output file
//! is written through a temp-file rename so interrupted runs never
//! leave half-written artifacts.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::classifier::{train, Observation};
use crate::config::RunConfig;
use crate::confidence::{
    entropy_confidence, learning_order, probability_score, random_confidence,
    stability_confidence, ConfidenceScores, LearningTrace,
};
use crate::corpus::{
    load_corpus, noise_ratio, string_match_pseudolabel, synth_corpus, vectorize,
    write_corpus_jsonl, Document, LabelSpace, PseudoLabelSet, SeedLexicon,
};
use crate::error::{LopsError, Result};
use crate::eval::{aunc, f1_scores, nc_curve, optimal_reference, random_reference, Averaging,
    OptimalForm};
use crate::selection::{lops_select, threshold_select};
use crate::selftrain::{self_train_with, sub_seed, Selector};

/// Write `content` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| LopsError::io(parent.display().to_string(), e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).map_err(|e| LopsError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| LopsError::io(path.display().to_string(), e))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.output_dir).join(name)
}

fn require_path<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| LopsError::Config(format!("missing required path: {what}")))
}

fn load_existing_corpus(cfg: &RunConfig) -> Result<(Option<LabelSpace>, Vec<Document>)> {
    let path = require_path(&cfg.corpus, "corpus")?;
    if !path.exists() {
        return Err(LopsError::Config(format!(
            "corpus path does not exist: {}",
            path.display()
        )));
    }
    load_corpus(path)
}

fn load_lexicon(cfg: &RunConfig) -> Result<SeedLexicon> {
    let path = require_path(&cfg.lexicon, "lexicon")?;
    if !path.exists() {
        return Err(LopsError::Config(format!(
            "lexicon path does not exist: {}",
            path.display()
        )));
    }
    SeedLexicon::load(path)
}

/// Label space: gold labels when the corpus has them, otherwise the
/// lexicon's labels in sorted order.
fn resolve_labels(from_corpus: Option<LabelSpace>, lexicon: &SeedLexicon) -> Result<LabelSpace> {
    match from_corpus {
        Some(ls) => {
            for l in lexicon.labels() {
                if ls.index_of(l).is_none() {
                    return Err(LopsError::Validation(format!(
                        "lexicon label {l:?} not among corpus gold labels"
                    )));
                }
            }
            Ok(ls)
        }
        None => LabelSpace::new(lexicon.labels().map(str::to_string).collect()),
    }
}

/// Either load pseudo-labels from file or generate them via string match.
fn obtain_pseudo(
    cfg: &RunConfig,
    docs: &[Document],
    labels: &LabelSpace,
) -> Result<PseudoLabelSet> {
    if let Some(path) = &cfg.pseudo_labels {
        PseudoLabelSet::load_jsonl(path, labels)
    } else {
        let lexicon = load_lexicon(cfg)?;
        string_match_pseudolabel(docs, &lexicon, labels)
    }
}

pub fn cmd_pseudo_label(cfg: &RunConfig) -> Result<()> {
    let (corpus_labels, docs) = load_existing_corpus(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let labels = resolve_labels(corpus_labels, &lexicon)?;
    let pseudo = string_match_pseudolabel(&docs, &lexicon, &labels)?;

    let mut buf = Vec::new();
    pseudo.write_jsonl(&mut buf, &labels)?;
    atomic_write(&out_path(cfg, "pseudo_labels.jsonl"), &buf)?;

    let mut report = serde_json::json!({
        "documents": docs.len(),
        "pseudo_labeled": pseudo.len(),
        "source": pseudo.source,
    });
    let have_gold = pseudo.iter().all(|(id, _)| {
        docs.iter()
            .any(|d| d.id == id && d.gold_label.is_some())
    });
    if have_gold && !pseudo.is_empty() {
        report["noise_ratio"] = serde_json::json!(noise_ratio(&pseudo, &docs)?);
    }
    atomic_write(
        &out_path(cfg, "pseudo_label_report.json"),
        serde_json::to_string_pretty(&report).unwrap().as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let (labels, docs, pseudo) = synth_corpus(&cfg.synth_spec())?;
    let mut buf = Vec::new();
    write_corpus_jsonl(&mut buf, &docs, &labels)?;
    atomic_write(&out_path(cfg, "corpus.jsonl"), &buf)?;

    let mut buf = Vec::new();
    pseudo.write_jsonl(&mut buf, &labels)?;
    atomic_write(&out_path(cfg, "pseudo_labels.jsonl"), &buf)?;

    let report = serde_json::json!({
        "documents": docs.len(),
        "pseudo_labeled": pseudo.len(),
        "noise_ratio": noise_ratio(&pseudo, &docs)?,
        "spec": cfg.synth_spec(),
    });
    atomic_write(
        &out_path(cfg, "synth_report.json"),
        serde_json::to_string_pretty(&report).unwrap().as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let (corpus_labels, docs) = load_existing_corpus(cfg)?;
    let labels = match (&cfg.pseudo_labels, corpus_labels) {
        (_, Some(ls)) => ls,
        (Some(_), None) => {
            return Err(LopsError::Validation(
                "pseudo-label file given but corpus carries no labels; add a lexicon".into(),
            ))
        }
        (None, None) => {
            let lexicon = load_lexicon(cfg)?;
            resolve_labels(None, &lexicon)?
        }
    };
    let pseudo = obtain_pseudo(cfg, &docs, &labels)?;
    let features = vectorize(&docs, cfg.weighting()?, cfg.min_df)?;

    let report = if cfg.selector == "lops" {
        let (mut report, trace, _) = lops_select(
            &features,
            &pseudo,
            &labels,
            &cfg.classifier_config(),
            &cfg.selection_params(),
        )?;
        report.attach_metrics(&docs, pseudo.len());
        let scores = learning_order(&trace, &pseudo)?;
        let mut buf = Vec::new();
        scores.write_csv(&mut buf, &pseudo, &labels)?;
        atomic_write(&out_path(cfg, "confidence_learning_order.csv"), &buf)?;
        report
    } else {
        let scores = scores_for(cfg, &cfg.selector, &docs, &features, &pseudo, &labels)?;
        let mut report = threshold_select(&scores, &pseudo, &labels, cfg.gamma);
        report.attach_metrics(&docs, pseudo.len());
        report
    };
    atomic_write(
        &out_path(cfg, "selection_report.json"),
        serde_json::to_string_pretty(&report.to_json()).unwrap().as_bytes(),
    )?;
    Ok(())
}

/// Train a probing classifier for the full T epochs and compute the
/// named confidence function.
fn scores_for(
    cfg: &RunConfig,
    function: &str,
    _docs: &[Document],
    features: &crate::corpus::FeatureMatrix,
    pseudo: &PseudoLabelSet,
    labels: &LabelSpace,
) -> Result<ConfidenceScores> {
    if function == "random" {
        return Ok(random_confidence(pseudo, sub_seed(cfg.rng_seed, "random", 0)));
    }
    let (model, snapshots) = train(features, pseudo, labels, &cfg.classifier_config(), |_| {
        Observation::Continue
    })?;
    let trace = LearningTrace::from_snapshots(&snapshots, pseudo, cfg.epochs)?;
    match function {
        "learning_order" | "lops" => learning_order(&trace, pseudo),
        "probability" => probability_score(&model, features, pseudo),
        "entropy" => entropy_confidence(&model, features, pseudo),
        "stability" => stability_confidence(&trace, pseudo),
        other => Err(LopsError::Config(format!("unknown confidence function {other:?}"))),
    }
}

pub fn cmd_self_train(cfg: &RunConfig) -> Result<()> {
    let (corpus_labels, docs) = load_existing_corpus(cfg)?;
    let labels = match corpus_labels {
        Some(ls) => {
            if cfg.lexicon.is_some() {
                resolve_labels(Some(ls), &load_lexicon(cfg)?)?
            } else {
                ls
            }
        }
        None => resolve_labels(None, &load_lexicon(cfg)?)?,
    };
    let pseudo = obtain_pseudo(cfg, &docs, &labels)?;
    let selector: Selector = cfg.selector.parse()?;
    let st_cfg = cfg.self_train_config()?;

    let records_path = out_path(cfg, "iterations.jsonl");
    let mut record_lines: Vec<String> = Vec::new();
    let outcome = self_train_with(&docs, &labels, &pseudo, &st_cfg, selector, |rec| {
        record_lines.push(serde_json::to_string(rec).unwrap());
        atomic_write(&records_path, (record_lines.join("\n") + "\n").as_bytes())
    })?;

    let manifest = serde_json::json!({
        "config": cfg,
        "selector": cfg.selector,
        "iterations": outcome.records,
    });
    atomic_write(
        &out_path(cfg, "manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap().as_bytes(),
    )?;

    let mut buf = String::new();
    for (id, (class, prob)) in &outcome.predictions {
        buf.push_str(
            &serde_json::json!({
                "id": id,
                "predicted_label": labels.name(*class),
                "max_prob": prob,
            })
            .to_string(),
        );
        buf.push('\n');
    }
    atomic_write(&out_path(cfg, "predictions.jsonl"), buf.as_bytes())?;
    outcome.final_model.save(&out_path(cfg, "model.json"))?;
    Ok(())
}

pub fn cmd_nc_curve(cfg: &RunConfig) -> Result<()> {
    let (corpus_labels, docs) = load_existing_corpus(cfg)?;
    let labels = corpus_labels
        .ok_or_else(|| LopsError::Config("nc-curve needs gold labels in the corpus".into()))?;
    if docs.iter().any(|d| d.gold_label.is_none()) {
        return Err(LopsError::Config("nc-curve needs gold labels on every document".into()));
    }
    let pseudo = obtain_pseudo(cfg, &docs, &labels)?;
    let features = vectorize(&docs, cfg.weighting()?, cfg.min_df)?;

    // one probing run, no bootstrapping; all trace-based functions share it
    let (model, snapshots) = train(&features, &pseudo, &labels, &cfg.classifier_config(), |_| {
        Observation::Continue
    })?;
    let trace = LearningTrace::from_snapshots(&snapshots, &pseudo, cfg.epochs)?;

    let all_scores = vec![
        learning_order(&trace, &pseudo)?,
        probability_score(&model, &features, &pseudo)?,
        entropy_confidence(&model, &features, &pseudo)?,
        stability_confidence(&trace, &pseudo)?,
        random_confidence(&pseudo, sub_seed(cfg.rng_seed, "random", 0)),
    ];

    let mut summary = serde_json::Map::new();
    let mut clean_fraction = 1.0;
    for scores in &all_scores {
        let curve = nc_curve(scores, &pseudo, &docs)?;
        clean_fraction = curve.clean_fraction;
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        atomic_write(&out_path(cfg, &format!("nc_curve_{}.csv", scores.function)), &buf)?;
        summary.insert(scores.function.clone(), serde_json::json!(aunc(&curve)?));
    }

    for (name, curve) in [
        ("optimal", optimal_reference(clean_fraction, OptimalForm::NoiseAmongSelected, 100)?),
        ("optimal_unnormalized", optimal_reference(clean_fraction, OptimalForm::Unnormalized, 100)?),
        ("random_reference", random_reference(clean_fraction, 100)?),
    ] {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        atomic_write(&out_path(cfg, &format!("nc_curve_{name}.csv")), &buf)?;
        summary.insert(format!("{name}_aunc"), serde_json::json!(aunc(&curve)?));
    }
    summary.insert("clean_fraction".into(), serde_json::json!(clean_fraction));
    atomic_write(
        &out_path(cfg, "aunc_summary.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(summary))
            .unwrap()
            .as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let (corpus_labels, docs) = load_existing_corpus(cfg)?;
    let labels = corpus_labels
        .ok_or_else(|| LopsError::Config("evaluate needs gold labels in the corpus".into()))?;
    let pred_path = require_path(&cfg.predictions, "predictions")?;
    let file = std::fs::File::open(pred_path)
        .map_err(|e| LopsError::io(pred_path.display().to_string(), e))?;
    let mut preds: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LopsError::io(pred_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| LopsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let id = v["id"].as_str().ok_or_else(|| LopsError::Parse {
            line: i + 1,
            message: "missing \"id\"".into(),
        })?;
        let name = v["predicted_label"].as_str().ok_or_else(|| LopsError::Parse {
            line: i + 1,
            message: "missing \"predicted_label\"".into(),
        })?;
        let class = labels.index_of(name).ok_or_else(|| LopsError::Parse {
            line: i + 1,
            message: format!("unknown label {name:?}"),
        })?;
        preds.insert(id.to_string(), class);
    }
    let gold: BTreeMap<String, usize> = docs
        .iter()
        .filter_map(|d| d.gold_label.map(|g| (d.id.clone(), g)))
        .collect();
    let metrics = serde_json::json!({
        "micro_f1": f1_scores(&preds, &gold, &labels, Averaging::Micro)?,
        "macro_f1": f1_scores(&preds, &gold, &labels, Averaging::Macro)?,
        "documents": preds.len(),
    });
    atomic_write(
        &out_path(cfg, "metrics.json"),
        serde_json::to_string_pretty(&metrics).unwrap().as_bytes(),
    )?;
    Ok(())
}
