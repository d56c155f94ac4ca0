//! Learning-order-based pseudo-label selection for weakly supervised
//! text classification.
//!
//! A probing classifier is trained on a noisy pseudo-labeled corpus and
//! the epoch at which each document is first predicted as its
//! pseudo-label is recorded. Clean labels tend to be learnt early, so
//! selecting early-learnt documents per class denoises the training
//! set. The crate covers the whole pipeline: seed-word pseudo-labeling,
//! learning-order tracking, subset selection, the self-training
//! bootstrap, and an evaluation suite (noise/coverage curves, AUNC,
//! micro/macro F1).
//!
//! ```
//! use lops::corpus::{synth_corpus, vectorize, SynthSpec, Weighting};
//! use lops::classifier::ClassifierConfig;
//! use lops::selection::{lops_select, SelectionParams};
//!
//! let (labels, docs, pseudo) = synth_corpus(&SynthSpec {
//!     n_classes: 2,
//!     n_per_class: 100,
//!     vocab_per_class: 20,
//!     shared_vocab: 10,
//!     doc_len: 12,
//!     flip_rate: 0.3,
//!     rng_seed: 0,
//! })
//! .unwrap();
//! let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
//! let params = SelectionParams { tau_percent: 50.0, max_epochs: 4 };
//! let (report, _trace, _model) =
//!     lops_select(&features, &pseudo, &labels, &ClassifierConfig::default(), &params).unwrap();
//! assert!(report.selected.len() <= pseudo.len());
//! ```

pub mod classifier;
pub mod cli;
pub mod config;
pub mod confidence;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod selection;
pub mod selftrain;

pub use error::{LopsError, Result};
