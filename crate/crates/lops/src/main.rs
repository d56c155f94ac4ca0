use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lops::cli;
use lops::config::RunConfig;
use lops::Result;

#[derive(Parser)]
#[command(name = "lops", about = "Pseudo-label selection by learning order", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Anything left unset falls back to
/// the --config file, then to the built-in defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat key-value config file (TOML syntax)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus JSONL: {"id", "text", "gold_label"?} per line
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Seed lexicon JSON: {"label": ["seed", ...]}
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Pseudo-label JSONL produced by `pseudo-label` or `synth`
    #[arg(long)]
    pseudo_labels: Option<PathBuf>,
    /// Predictions JSONL (for `evaluate`)
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<String>,
    /// Per-class selection fraction in (0, 100]
    #[arg(long)]
    tau: Option<f64>,
    /// Bootstrap probability threshold in (0, 1)
    #[arg(long)]
    delta: Option<f64>,
    /// Probing/final classifier epochs T
    #[arg(long)]
    epochs: Option<usize>,
    /// Self-training iterations
    #[arg(long)]
    n_its: Option<usize>,
    /// lops | probability | random | entropy | stability | none
    #[arg(long)]
    selector: Option<String>,
    /// Confidence threshold for non-lops `select`
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// tf-idf | raw-count
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    vocab_per_class: Option<usize>,
    #[arg(long)]
    shared_vocab: Option<usize>,
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    flip_rate: Option<f64>,
}

impl Overrides {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = Some(v); })*
            };
        }
        take!(corpus, lexicon, pseudo_labels, predictions);
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(tau, delta, epochs, n_its, gamma, learning_rate, batch_size, l2_penalty, rng_seed, min_df);
        if let Some(v) = self.selector {
            cfg.selector = v;
        }
        if let Some(v) = self.weighting {
            cfg.weighting = v;
        }
        if let Some(v) = self.classes {
            cfg.synth_classes = v;
        }
        if let Some(v) = self.n_per_class {
            cfg.synth_n_per_class = v;
        }
        if let Some(v) = self.vocab_per_class {
            cfg.synth_vocab_per_class = v;
        }
        if let Some(v) = self.shared_vocab {
            cfg.synth_shared_vocab = v;
        }
        if let Some(v) = self.doc_len {
            cfg.synth_doc_len = v;
        }
        if let Some(v) = self.flip_rate {
            cfg.synth_flip_rate = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate pseudo-labels by seed-word string matching
    PseudoLabel(Overrides),
    /// Select a pseudo-label subset (LOPS or confidence threshold)
    Select(Overrides),
    /// Run the self-training bootstrap
    SelfTrain(Overrides),
    /// Export NC-curves and AUNC for every confidence function
    NcCurve(Overrides),
    /// Micro/macro F1 of a predictions file against gold labels
    Evaluate(Overrides),
    /// Generate a synthetic corpus with controlled label noise
    Synth(Overrides),
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::PseudoLabel(o) => cli::cmd_pseudo_label(&o.resolve()?),
        Command::Select(o) => cli::cmd_select(&o.resolve()?),
        Command::SelfTrain(o) => cli::cmd_self_train(&o.resolve()?),
        Command::NcCurve(o) => cli::cmd_nc_curve(&o.resolve()?),
        Command::Evaluate(o) => cli::cmd_evaluate(&o.resolve()?),
        Command::Synth(o) => cli::cmd_synth(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
