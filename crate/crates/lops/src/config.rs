//! Flat key-value run configuration (TOML syntax), shared by every
//! subcommand. Flags override file values; file values override the
//! defaults tau=50, delta=0.6, epochs=4, n_its=5.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::corpus::{SynthSpec, Weighting};
use crate::error::{LopsError, Result};
use crate::selection::SelectionParams;
use crate::selftrain::SelfTrainConfig;

fn d_output_dir() -> String {
    "out".into()
}
fn d_tau() -> f64 {
    50.0
}
fn d_delta() -> f64 {
    0.6
}
fn d_epochs() -> usize {
    4
}
fn d_n_its() -> usize {
    5
}
fn d_selector() -> String {
    "lops".into()
}
fn d_lr() -> f64 {
    0.1
}
fn d_batch() -> usize {
    32
}
fn d_weighting() -> String {
    "tf-idf".into()
}
fn d_min_df() -> usize {
    1
}
fn d_gamma() -> f64 {
    0.5
}
fn d_true() -> bool {
    true
}
fn d_classes() -> usize {
    2
}
fn d_n_per_class() -> usize {
    1000
}
fn d_vocab() -> usize {
    20
}
fn d_shared() -> usize {
    10
}
fn d_doc_len() -> usize {
    12
}
fn d_flip() -> f64 {
    0.3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub pseudo_labels: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    #[serde(default = "d_output_dir")]
    pub output_dir: String,

    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_n_its")]
    pub n_its: usize,
    #[serde(default = "d_selector")]
    pub selector: String,
    #[serde(default = "d_gamma")]
    pub gamma: f64,

    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub l2_penalty: f64,
    #[serde(default = "d_true")]
    pub shuffle_per_epoch: bool,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "d_weighting")]
    pub weighting: String,
    #[serde(default = "d_min_df")]
    pub min_df: usize,

    #[serde(default = "d_classes")]
    pub synth_classes: usize,
    #[serde(default = "d_n_per_class")]
    pub synth_n_per_class: usize,
    #[serde(default = "d_vocab")]
    pub synth_vocab_per_class: usize,
    #[serde(default = "d_shared")]
    pub synth_shared_vocab: usize,
    #[serde(default = "d_doc_len")]
    pub synth_doc_len: usize,
    #[serde(default = "d_flip")]
    pub synth_flip_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| LopsError::io(path.display().to_string(), e))?;
        toml::from_str(&raw).map_err(|e| LopsError::Config(format!("{}: {e}", path.display())))
    }

    pub fn weighting(&self) -> Result<Weighting> {
        match self.weighting.as_str() {
            "tf-idf" | "tfidf" => Ok(Weighting::TfIdf),
            "raw-count" | "raw" => Ok(Weighting::RawCount),
            other => Err(LopsError::Config(format!("unknown weighting {other:?}"))),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2_penalty: self.l2_penalty,
            rng_seed: self.rng_seed,
            shuffle_per_epoch: self.shuffle_per_epoch,
        }
    }

    pub fn selection_params(&self) -> SelectionParams {
        SelectionParams {
            tau_percent: self.tau,
            max_epochs: self.epochs,
        }
    }

    pub fn self_train_config(&self) -> Result<SelfTrainConfig> {
        Ok(SelfTrainConfig {
            n_its: self.n_its,
            delta: self.delta,
            selection: self.selection_params(),
            classifier: self.classifier_config(),
            rng_seed: self.rng_seed,
            weighting: self.weighting()?,
            min_df: self.min_df,
        })
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_classes: self.synth_classes,
            n_per_class: self.synth_n_per_class,
            vocab_per_class: self.synth_vocab_per_class,
            shared_vocab: self.synth_shared_vocab,
            doc_len: self.synth_doc_len,
            flip_rate: self.synth_flip_rate,
            rng_seed: self.rng_seed,
        }
    }
}
