//! Corpus ingestion, tokenization, seed-word pseudo-labeling, sparse
//! features, and synthetic corpora with controlled label noise.
//!
//! ```
//! use std::collections::BTreeMap;
//! use lops::corpus::{noise_ratio, string_match_pseudolabel, Document, LabelSpace, SeedLexicon};
//!
//! let labels = LabelSpace::new(vec!["pets".into(), "weather".into()]).unwrap();
//! let docs = vec![
//!     Document::new("d0", "My cat sleeps all day.", Some(0)),
//!     Document::new("d1", "Heavy rain is forecast again.", Some(1)),
//!     Document::new("d2", "Heavy rain made my cat grumpy.", Some(0)),
//! ];
//! let lexicon = SeedLexicon::new(BTreeMap::from([
//!     ("pets".into(), vec!["cat".into()]),
//!     ("weather".into(), vec!["heavy rain".into()]),
//! ]))
//! .unwrap();
//!
//! let pseudo = string_match_pseudolabel(&docs, &lexicon, &labels).unwrap();
//! assert_eq!(pseudo.label_of("d0"), Some(0));
//! assert_eq!(pseudo.label_of("d1"), Some(1));
//! // d2 matches one seed of each class: tied argmax, so it abstains
//! assert_eq!(pseudo.label_of("d2"), None);
//! assert_eq!(noise_ratio(&pseudo, &docs).unwrap(), 0.0);
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LopsError, Result};

/// Ordered set of class labels. Class indices are 0-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(LopsError::Validation("label space is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(LopsError::Validation(format!("duplicate label name {n:?}")));
            }
        }
        Ok(LabelSpace { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One text unit. `tokens` are always derived from `text` via [`tokenize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    /// Gold class index, when known.
    pub gold_label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold_label: Option<usize>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Document {
            id: id.into(),
            text,
            tokens,
            gold_label,
        }
    }
}

/// Lowercase, split on non-alphanumeric runs, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Per-label seed terms. Multi-word entries are matched as token phrases.
#[derive(Debug, Clone)]
pub struct SeedLexicon {
    /// label name -> seed terms (each seed pre-tokenized).
    seeds: BTreeMap<String, Vec<Vec<String>>>,
}

impl SeedLexicon {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut seen: HashSet<String> = HashSet::new();
        let mut seeds = BTreeMap::new();
        for (label, terms) in entries {
            let mut toks = Vec::new();
            for term in terms {
                let lowered = term.to_lowercase();
                if !seen.insert(lowered.clone()) {
                    return Err(LopsError::Validation(format!(
                        "seed {lowered:?} appears under more than one label"
                    )));
                }
                let phrase = tokenize(&lowered);
                if phrase.is_empty() {
                    return Err(LopsError::Validation(format!("empty seed under {label:?}")));
                }
                toks.push(phrase);
            }
            seeds.insert(label, toks);
        }
        Ok(SeedLexicon { seeds })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.seeds.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.values().all(Vec::is_empty)
    }

    /// Load from JSON: `{"label": ["seed1", "seed two", ...], ...}`.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| LopsError::io(path.display().to_string(), e))?;
        let entries: BTreeMap<String, Vec<String>> = serde_json::from_str(&raw)
            .map_err(|e| LopsError::Data(format!("bad lexicon {}: {e}", path.display())))?;
        SeedLexicon::new(entries)
    }
}

/// The weakly labeled subset: doc_id -> assigned class index.
///
/// Iteration order is always ascending doc_id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    entries: BTreeMap<String, usize>,
    pub source: String,
}

impl PseudoLabelSet {
    pub fn new(source: impl Into<String>) -> Self {
        PseudoLabelSet {
            entries: BTreeMap::new(),
            source: source.into(),
        }
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, usize)>,
        source: impl Into<String>,
        labels: &LabelSpace,
    ) -> Result<Self> {
        let mut set = PseudoLabelSet::new(source);
        for (id, label) in entries {
            if label >= labels.len() {
                return Err(LopsError::Validation(format!(
                    "label index {label} out of range for doc {id:?}"
                )));
            }
            if set.entries.insert(id.clone(), label).is_some() {
                return Err(LopsError::Validation(format!("duplicate doc id {id:?}")));
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label_of(&self, doc_id: &str) -> Option<usize> {
        self.entries.get(doc_id).copied()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.entries.contains_key(doc_id)
    }

    /// Ascending doc_id.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.entries.iter().map(|(id, &l)| (id.as_str(), l))
    }

    /// The per-class view D[j].
    pub fn class_members(&self, class: usize) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |(_, &l)| l == class)
            .map(|(id, _)| id.as_str())
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.class_members(class).count()
    }

    /// Distinct class indices present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut cs: Vec<usize> = self.entries.values().copied().collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    /// Insert without overwriting; returns true if the doc was new.
    pub fn insert_if_absent(&mut self, doc_id: &str, label: usize) -> bool {
        if self.entries.contains_key(doc_id) {
            false
        } else {
            self.entries.insert(doc_id.to_string(), label);
            true
        }
    }

    /// Restrict to the given doc ids.
    pub fn subset(&self, ids: &HashSet<String>, source: impl Into<String>) -> PseudoLabelSet {
        PseudoLabelSet {
            entries: self
                .entries
                .iter()
                .filter(|(id, _)| ids.contains(id.as_str()))
                .map(|(id, &l)| (id.clone(), l))
                .collect(),
            source: source.into(),
        }
    }

    /// Write as JSONL: `{"id", "label", "source"}` per line.
    pub fn write_jsonl<W: Write>(&self, out: &mut W, labels: &LabelSpace) -> Result<()> {
        for (id, &l) in &self.entries {
            let line = serde_json::json!({
                "id": id,
                "label": labels.name(l),
                "source": self.source,
            });
            writeln!(out, "{line}").map_err(|e| LopsError::io("<writer>", e))?;
        }
        Ok(())
    }

    /// Read JSONL written by [`PseudoLabelSet::write_jsonl`].
    pub fn load_jsonl(path: &Path, labels: &LabelSpace) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| LopsError::io(path.display().to_string(), e))?;
        let mut set = PseudoLabelSet::new("file");
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| LopsError::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| LopsError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let id = v["id"].as_str().ok_or_else(|| LopsError::Parse {
                line: lineno,
                message: "missing \"id\" field".into(),
            })?;
            let label_name = v["label"].as_str().ok_or_else(|| LopsError::Parse {
                line: lineno,
                message: "missing \"label\" field".into(),
            })?;
            let label = labels.index_of(label_name).ok_or_else(|| LopsError::Parse {
                line: lineno,
                message: format!("unknown label {label_name:?}"),
            })?;
            if let Some(src) = v["source"].as_str() {
                set.source = src.to_string();
            }
            if !set.insert_if_absent(id, label) {
                return Err(LopsError::Validation(format!("duplicate doc id {id:?}")));
            }
        }
        Ok(set)
    }
}

/// Feature weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    RawCount,
    TfIdf,
}

/// Sparse document-term matrix. Row order matches `doc_ids`.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub doc_ids: Vec<String>,
    row_index: HashMap<String, usize>,
    pub vocabulary: Vec<String>,
    pub weighting: Weighting,
    /// Per-document sparse (column, weight) pairs, columns ascending.
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row_of(&self, doc_id: &str) -> Option<&[(u32, f64)]> {
        self.row_index.get(doc_id).map(|&i| self.rows[i].as_slice())
    }

    pub fn row_position(&self, doc_id: &str) -> Option<usize> {
        self.row_index.get(doc_id).copied()
    }
}

/// Build the document-term matrix over `docs`.
///
/// Vocabulary keeps terms with document frequency >= `min_df`, ordered
/// lexicographically. Tf-idf rows use `tf * (ln((1+N)/(1+df)) + 1)` and
/// are L2-normalized.
pub fn vectorize(docs: &[Document], weighting: Weighting, min_df: usize) -> Result<FeatureMatrix> {
    if docs.is_empty() {
        return Err(LopsError::Validation("vectorize needs at least one document".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let uniq: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = df
        .iter()
        .filter(|(_, &c)| c >= min_df.max(1))
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(LopsError::Validation("empty vocabulary after min_df filtering".into()));
    }
    let term_index: HashMap<&str, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocabulary
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + df[t.as_str()] as f64)).ln() + 1.0)
        .collect();

    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in &doc.tokens {
            if let Some(&col) = term_index.get(tok.as_str()) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        let mut row: Vec<(u32, f64)> = counts.into_iter().collect();
        if weighting == Weighting::TfIdf {
            for (col, w) in &mut row {
                *w *= idf[*col as usize];
            }
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, w) in &mut row {
                    *w /= norm;
                }
            }
        }
        rows.push(row);
    }

    let doc_ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let row_index = doc_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    Ok(FeatureMatrix {
        doc_ids,
        row_index,
        vocabulary,
        weighting,
        rows,
    })
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    gold_label: Option<String>,
}

/// Load a JSONL corpus: `{"id", "text", "gold_label"?}` per line.
///
/// Returns a label space built from the union of observed gold labels
/// (sorted by name) when any are present.
pub fn load_corpus(path: &Path) -> Result<(Option<LabelSpace>, Vec<Document>)> {
    let file =
        std::fs::File::open(path).map_err(|e| LopsError::io(path.display().to_string(), e))?;
    let mut raw = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| LopsError::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| LopsError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen_ids.insert(rec.id.clone()) {
            return Err(LopsError::Validation(format!(
                "duplicate doc id {:?} at line {lineno}",
                rec.id
            )));
        }
        raw.push(rec);
    }

    let mut gold_names: Vec<String> = raw.iter().filter_map(|r| r.gold_label.clone()).collect();
    gold_names.sort();
    gold_names.dedup();
    let labels = if gold_names.is_empty() {
        None
    } else {
        Some(LabelSpace::new(gold_names)?)
    };

    let docs = raw
        .into_iter()
        .map(|r| {
            let gold = r
                .gold_label
                .as_deref()
                .and_then(|g| labels.as_ref().and_then(|ls| ls.index_of(g)));
            Document::new(r.id, r.text, gold)
        })
        .collect();
    Ok((labels, docs))
}

/// Write documents as JSONL (inverse of [`load_corpus`]).
pub fn write_corpus_jsonl<W: Write>(
    out: &mut W,
    docs: &[Document],
    labels: &LabelSpace,
) -> Result<()> {
    for d in docs {
        let mut obj = serde_json::json!({ "id": d.id, "text": d.text });
        if let Some(g) = d.gold_label {
            obj["gold_label"] = serde_json::Value::String(labels.name(g).to_string());
        }
        writeln!(out, "{obj}").map_err(|e| LopsError::io("<writer>", e))?;
    }
    Ok(())
}

/// Count non-overlapping occurrences of `phrase` in `tokens`.
fn phrase_count(tokens: &[String], phrase: &[String]) -> usize {
    if phrase.len() == 1 {
        return tokens.iter().filter(|t| *t == &phrase[0]).count();
    }
    let mut count = 0;
    let mut i = 0;
    while i + phrase.len() <= tokens.len() {
        if tokens[i..i + phrase.len()].iter().eq(phrase.iter()) {
            count += 1;
            i += phrase.len();
        } else {
            i += 1;
        }
    }
    count
}

/// Assign each document the label whose aggregated seed term frequency is
/// maximum. Zero total score or a tied argmax leaves the document unlabeled.
pub fn string_match_pseudolabel(
    docs: &[Document],
    lexicon: &SeedLexicon,
    labels: &LabelSpace,
) -> Result<PseudoLabelSet> {
    if lexicon.is_empty() {
        return Err(LopsError::Validation("seed lexicon has no seeds".into()));
    }
    let mut label_seeds: Vec<(usize, &Vec<Vec<String>>)> = Vec::new();
    for (name, seeds) in &lexicon.seeds {
        let idx = labels.index_of(name).ok_or_else(|| {
            LopsError::Validation(format!("lexicon label {name:?} not in label space"))
        })?;
        label_seeds.push((idx, seeds));
    }

    let mut set = PseudoLabelSet::new("string-match");
    for doc in docs {
        let mut best: Option<(usize, usize)> = None; // (label, score)
        let mut tied = false;
        for &(label, seeds) in &label_seeds {
            let score: usize = seeds.iter().map(|p| phrase_count(&doc.tokens, p)).sum();
            match best {
                Some((_, s)) if score > s => {
                    best = Some((label, score));
                    tied = false;
                }
                Some((_, s)) if score == s => tied = true,
                None => {
                    best = Some((label, score));
                    tied = false;
                }
                _ => {}
            }
        }
        if let Some((label, score)) = best {
            if score > 0 && !tied {
                set.insert_if_absent(&doc.id, label);
            }
        }
    }
    Ok(set)
}

/// Fraction of pseudo-labels that disagree with gold labels.
pub fn noise_ratio(pseudo: &PseudoLabelSet, docs: &[Document]) -> Result<f64> {
    if pseudo.is_empty() {
        return Err(LopsError::Validation("noise_ratio on empty pseudo-label set".into()));
    }
    let gold: HashMap<&str, Option<usize>> = docs
        .iter()
        .map(|d| (d.id.as_str(), d.gold_label))
        .collect();
    let mut wrong = 0usize;
    for (id, label) in pseudo.iter() {
        match gold.get(id) {
            Some(Some(g)) => {
                if *g != label {
                    wrong += 1;
                }
            }
            _ => {
                return Err(LopsError::Validation(format!(
                    "doc {id:?} has no gold label"
                )))
            }
        }
    }
    Ok(wrong as f64 / pseudo.len() as f64)
}

/// Parameters for [`synth_corpus`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub vocab_per_class: usize,
    pub shared_vocab: usize,
    pub doc_len: usize,
    /// Fraction of pseudo-labels flipped to a random other class.
    pub flip_rate: f64,
    pub rng_seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_classes < 1
            || self.n_per_class < 1
            || self.vocab_per_class < 1
            || self.doc_len < 1
        {
            return Err(LopsError::Validation("synth spec counts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.flip_rate) {
            return Err(LopsError::Validation(format!(
                "flip_rate {} outside [0,1)",
                self.flip_rate
            )));
        }
        if self.flip_rate > 0.0 && self.n_classes < 2 {
            return Err(LopsError::Validation(
                "flip_rate > 0 needs at least 2 classes".into(),
            ));
        }
        Ok(())
    }
}

/// Generate a corpus with class-private vocabularies plus shared noise
/// tokens, and a pseudo-label set with exactly `round(flip_rate * N)`
/// labels flipped. Deterministic per seed.
pub fn synth_corpus(spec: &SynthSpec) -> Result<(LabelSpace, Vec<Document>, PseudoLabelSet)> {
    spec.validate()?;
    let labels = LabelSpace::new(
        (0..spec.n_classes)
            .map(|j| format!("class{j:02}"))
            .collect(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n_total = spec.n_classes * spec.n_per_class;
    let width = (n_total as f64).log10().ceil() as usize + 1;

    let mut docs = Vec::with_capacity(n_total);
    let mut i = 0usize;
    for class in 0..spec.n_classes {
        for _ in 0..spec.n_per_class {
            let mut toks = Vec::with_capacity(spec.doc_len);
            for _ in 0..spec.doc_len {
                // 70% class-private signal, 30% shared noise; class tokens
                // follow a skewed (head-heavy) frequency profile so corpora
                // have both strong common signal and a rare tail
                if spec.shared_vocab == 0 || rng.gen::<f64>() < 0.7 {
                    let u: f64 = rng.gen();
                    let k = ((u * u * spec.vocab_per_class as f64) as usize)
                        .min(spec.vocab_per_class - 1);
                    toks.push(format!("c{class:02}w{k:04}"));
                } else {
                    let k = rng.gen_range(0..spec.shared_vocab);
                    toks.push(format!("shared{k:03}"));
                }
            }
            let text = toks.join(" ");
            docs.push(Document::new(format!("d{i:0width$}"), text, Some(class)));
            i += 1;
        }
    }

    let mut entries: BTreeMap<String, usize> = docs
        .iter()
        .map(|d| (d.id.clone(), d.gold_label.unwrap()))
        .collect();
    let n_flips = (spec.flip_rate * n_total as f64).round() as usize;
    let mut ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    ids.shuffle(&mut rng);
    for id in ids.into_iter().take(n_flips) {
        let gold = entries[&id];
        let mut other = rng.gen_range(0..spec.n_classes - 1);
        if other >= gold {
            other += 1;
        }
        entries.insert(id, other);
    }
    let pseudo = PseudoLabelSet::from_entries(entries, "synthetic", &labels)?;
    Ok((labels, docs, pseudo))
}
