//! Acceptance suite: one test per criterion, each printing a pass line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lops::classifier::{full_gradient, train, ClassifierConfig, Observation, TrainedModel};
use lops::confidence::{learning_order, random_confidence, DocTrace, LearningTrace};
use lops::corpus::{synth_corpus, vectorize, LabelSpace, PseudoLabelSet, SynthSpec, Weighting};
use lops::eval::{aunc, f1_scores, nc_curve, optimal_reference, Averaging, OptimalForm};
use lops::selection::{class_quota, lops_select, OnlineLopsState, SelectionParams};
use lops::selftrain::{self_train, SelfTrainConfig, Selector};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

/// The spec-pinned probing setup: 2 classes, 2000 docs, 30% flips,
/// linear prober with T=4 and lr=0.1.
fn probing_setup(seed: u64) -> (SynthSpec, ClassifierConfig) {
    let spec = SynthSpec {
        n_classes: 2,
        n_per_class: 1000,
        vocab_per_class: 20,
        shared_vocab: 10,
        doc_len: 12,
        flip_rate: 0.30,
        rng_seed: seed,
    };
    let cfg = ClassifierConfig {
        epochs: 4,
        batch_size: 32,
        learning_rate: 0.1,
        l2_penalty: 0.0,
        rng_seed: seed,
        shuffle_per_epoch: true,
    };
    (spec, cfg)
}

#[test]
fn criterion_01_learning_order_exactness() {
    let labels = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
    for t_total in 1..=16usize {
        for t in 1..=t_total {
            let pseudo = PseudoLabelSet::from_entries(
                vec![("learnt".to_string(), 0), ("never".to_string(), 1)],
                "t",
                &labels,
            )
            .unwrap();
            let mut per_doc = BTreeMap::new();
            let mut bitmap = vec![false; t_total];
            for b in bitmap.iter_mut().skip(t - 1) {
                *b = true;
            }
            per_doc.insert(
                "learnt".to_string(),
                DocTrace {
                    bitmap,
                    first_learnt: Some(t),
                },
            );
            per_doc.insert(
                "never".to_string(),
                DocTrace {
                    bitmap: vec![false; t_total],
                    first_learnt: None,
                },
            );
            let trace = LearningTrace {
                per_doc,
                epochs_total: t_total,
                epochs_completed: t_total,
            };
            let scores = learning_order(&trace, &pseudo).unwrap();
            let expected = 1.0 - t as f64 / t_total as f64;
            assert_eq!(scores.get("learnt"), Some(expected), "T={t_total} t={t}");
            assert_eq!(scores.get("never"), Some(0.0));
        }
    }
    println!("[PASS] learning-order scores equal 1 - t/T exactly for all T <= 16; never-learnt = 0");
}

/// Offline formulation: rank per class by (first_learnt asc, doc_id asc)
/// and take up to the class quota among docs learnt within the trained
/// epochs. Independent of the online state machine.
fn offline_lops(
    first_learnt: &BTreeMap<String, Option<usize>>,
    pseudo: &PseudoLabelSet,
    tau: f64,
    epochs_trained: usize,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for class in pseudo.classes() {
        let mut members: Vec<(&str, usize)> = pseudo
            .class_members(class)
            .filter_map(|id| {
                first_learnt[id]
                    .filter(|&fl| fl <= epochs_trained)
                    .map(|fl| (id, fl))
            })
            .collect();
        members.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let quota = class_quota(pseudo.class_size(class), tau);
        out.extend(members.into_iter().take(quota).map(|(id, _)| id.to_string()));
    }
    out
}

#[test]
fn criterion_02_algorithm_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC);
    let labels = LabelSpace::new((0..5).map(|i| format!("c{i}")).collect()).unwrap();
    for instance in 0..120 {
        let m = rng.gen_range(2..=5usize);
        let n = rng.gen_range(m..=200usize);
        let t_max = rng.gen_range(1..=8usize);
        let tau = rng.gen_range(1..=100) as f64;
        let pseudo = PseudoLabelSet::from_entries(
            (0..n).map(|i| (format!("d{i:03}"), if i < m { i } else { rng.gen_range(0..m) })),
            "t",
            &labels,
        )
        .unwrap();
        // random bitmaps, deliberately non-monotone
        let traces: BTreeMap<String, Vec<bool>> = pseudo
            .iter()
            .map(|(id, _)| {
                (
                    id.to_string(),
                    (0..t_max).map(|_| rng.gen_bool(0.4)).collect(),
                )
            })
            .collect();
        let first_learnt: BTreeMap<String, Option<usize>> = traces
            .iter()
            .map(|(id, bm)| (id.clone(), bm.iter().position(|&b| b).map(|i| i + 1)))
            .collect();

        let mut state = OnlineLopsState::new(&pseudo, tau);
        for epoch in 1..=t_max {
            let preds: BTreeMap<String, usize> = pseudo
                .iter()
                .map(|(id, label)| {
                    let correct = traces[id][epoch - 1];
                    (id.to_string(), if correct { label } else { (label + 1) % m })
                })
                .collect();
            if state.observe_epoch(&preds) {
                break;
            }
        }
        let online: BTreeSet<String> = state.selected.iter().cloned().collect();
        let offline = offline_lops(&first_learnt, &pseudo, tau, state.epochs_seen);
        assert_eq!(online, offline, "instance {instance}: tau={tau} T={t_max}");
    }
    println!("[PASS] online LOPS equals the offline rank-by-learning-order selection on 120 random instances");
}

fn clean_set(docs: &[lops::corpus::Document], pseudo: &PseudoLabelSet) -> BTreeSet<String> {
    docs.iter()
        .filter(|d| d.gold_label == pseudo.label_of(&d.id))
        .map(|d| d.id.clone())
        .collect()
}

#[test]
fn criterion_03_memorization_clean_learnt_first() {
    let mut lifts = Vec::new();
    for seed in 0..3u64 {
        let (spec, cfg) = probing_setup(seed);
        let (labels, docs, pseudo) = synth_corpus(&spec).unwrap();
        let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
        let (_, snaps) = train(&features, &pseudo, &labels, &cfg, |_| Observation::Continue).unwrap();
        let trace = LearningTrace::from_snapshots(&snaps, &pseudo, cfg.epochs).unwrap();
        let clean = clean_set(&docs, &pseudo);
        let epoch1: Vec<&String> = trace
            .per_doc
            .iter()
            .filter(|(_, t)| t.first_learnt == Some(1))
            .map(|(id, _)| id)
            .collect();
        assert!(!epoch1.is_empty());
        let clean_frac =
            epoch1.iter().filter(|id| clean.contains(**id)).count() as f64 / epoch1.len() as f64;
        lifts.push(clean_frac - 0.70);
    }
    let med = median(lifts.clone());
    assert!(
        med >= 0.05,
        "median clean-fraction lift among epoch-1 learners {med:.4} < 0.05 ({lifts:?})"
    );
    println!(
        "[PASS] epoch-1 learners are cleaner than the corpus: median lift {med:.3} >= 0.05"
    );
}

#[test]
fn criterion_04_selection_denoising() {
    let mut noises = Vec::new();
    for seed in 0..3u64 {
        let (spec, cfg) = probing_setup(seed);
        let (labels, docs, pseudo) = synth_corpus(&spec).unwrap();
        let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
        let params = SelectionParams {
            tau_percent: 50.0,
            max_epochs: 4,
        };
        let (mut report, _, _) = lops_select(&features, &pseudo, &labels, &cfg, &params).unwrap();
        report.attach_metrics(&docs, pseudo.len());
        noises.push(report.noise.unwrap());
    }
    let med = median(noises.clone());
    assert!(med <= 0.20, "median LOPS selected-set noise {med:.4} > 0.20 ({noises:?})");
    println!("[PASS] LOPS tau=50 selected-set noise (median {med:.3}) <= 0.20 vs injected 0.30");
}

#[test]
fn criterion_05_aunc_ordering() {
    let mut lo_auncs = Vec::new();
    let mut rnd_auncs = Vec::new();
    for seed in 0..3u64 {
        let (spec, cfg) = probing_setup(seed);
        let (labels, docs, pseudo) = synth_corpus(&spec).unwrap();
        let features = vectorize(&docs, Weighting::TfIdf, 1).unwrap();
        let (_, snaps) = train(&features, &pseudo, &labels, &cfg, |_| Observation::Continue).unwrap();
        let trace = LearningTrace::from_snapshots(&snaps, &pseudo, cfg.epochs).unwrap();
        let lo = learning_order(&trace, &pseudo).unwrap();
        let rnd = random_confidence(&pseudo, seed.wrapping_add(1000));
        lo_auncs.push(aunc(&nc_curve(&lo, &pseudo, &docs).unwrap()).unwrap());
        rnd_auncs.push(aunc(&nc_curve(&rnd, &pseudo, &docs).unwrap()).unwrap());
    }
    let lo_med = median(lo_auncs.clone());
    let rnd_med = median(rnd_auncs.clone());
    assert!(
        lo_med <= 0.9 * rnd_med,
        "AUNC(learning_order) {lo_med:.4} > 0.9 x AUNC(random) {rnd_med:.4}"
    );
    for r in &rnd_auncs {
        assert!((r - 0.30).abs() <= 0.03, "AUNC(random) {r:.4} not within 0.30 +- 0.03");
    }
    println!(
        "[PASS] AUNC ordering: learning_order {lo_med:.3} <= 0.9 x random {rnd_med:.3}; random within (1-c) +- 0.03"
    );
}

#[test]
fn criterion_06_closed_form_aunc() {
    let curve = optimal_reference(0.7, OptimalForm::Unnormalized, 100).unwrap();
    let a = aunc(&curve).unwrap();
    assert!((a - 0.045).abs() < 1e-9, "AUNC {a} != 0.045");
    let fine = optimal_reference(0.7, OptimalForm::Unnormalized, 1_000_000).unwrap();
    let a_fine = aunc(&fine).unwrap();
    assert!((a - a_fine).abs() < 1e-6, "grid disagreement {}", (a - a_fine).abs());
    println!("[PASS] optimal rectifier AUNC at c=0.7 is 0.045 +- 1e-9, fine-grid agreement 1e-6");
}

#[test]
fn criterion_07_self_training_benefit() {
    // wide-vocabulary corpus: rare-token tails let the final classifier
    // memorize flipped labels when trained long, so the injected noise
    // actually costs the standard run accuracy
    let mut gaps = Vec::new();
    for seed in 0..3u64 {
        let spec = SynthSpec {
            n_classes: 2,
            n_per_class: 500,
            vocab_per_class: 2000,
            shared_vocab: 50,
            doc_len: 15,
            flip_rate: 0.30,
            rng_seed: seed,
        };
        let (labels, docs, pseudo) = synth_corpus(&spec).unwrap();
        let cfg = SelfTrainConfig {
            n_its: 3,
            delta: 0.6,
            rng_seed: seed,
            classifier: ClassifierConfig {
                epochs: 60,
                learning_rate: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let lops_run = self_train(&docs, &labels, &pseudo, &cfg, Selector::Lops).unwrap();
        let std_run = self_train(&docs, &labels, &pseudo, &cfg, Selector::None).unwrap();
        let f1_of = |run: &lops::selftrain::SelfTrainOutcome| {
            run.records.last().unwrap().macro_f1.unwrap()
        };
        gaps.push(f1_of(&lops_run) - f1_of(&std_run));
    }
    let med = median(gaps.clone());
    assert!(med >= 0.02, "median macro-F1 gap {med:.4} < 0.02 ({gaps:?})");
    println!("[PASS] self-training: macro-F1(LOPS) beats Standard by median {med:.3} >= 0.02");
}

#[test]
fn criterion_08_optimal_filter_exact() {
    let (spec, _) = probing_setup(0);
    let (labels, docs, pseudo) = synth_corpus(&spec).unwrap();
    let mut report = lops::selection::optimal_filter(&pseudo, &docs, &labels).unwrap();
    report.attach_metrics(&docs, pseudo.len());
    assert_eq!(report.noise, Some(0.0));
    let c = 0.70;
    assert_eq!(report.coverage, Some(c));
    println!("[PASS] optimal filter: selected noise exactly 0, coverage exactly c");
}

/// Independent oracle: per-class precision/recall from naively counted
/// confusion cells, F1 = 2PR/(P+R).
fn f1_oracle(
    preds: &BTreeMap<String, usize>,
    gold: &BTreeMap<String, usize>,
    m: usize,
    macro_avg: bool,
) -> f64 {
    let mut cm = vec![vec![0usize; m]; m];
    for (id, &p) in preds {
        cm[gold[id]][p] += 1;
    }
    let f1_of = |tp: usize, fp: usize, fn_: usize| -> f64 {
        let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    };
    if macro_avg {
        (0..m)
            .map(|j| {
                let tp = cm[j][j];
                let fp: usize = (0..m).filter(|&g| g != j).map(|g| cm[g][j]).sum();
                let fn_: usize = (0..m).filter(|&p| p != j).map(|p| cm[j][p]).sum();
                f1_of(tp, fp, fn_)
            })
            .sum::<f64>()
            / m as f64
    } else {
        let tp: usize = (0..m).map(|j| cm[j][j]).sum();
        let total: usize = preds.len();
        f1_of(tp, total - tp, total - tp)
    }
}

#[test]
fn criterion_09_f1_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    for _ in 0..100 {
        let m = rng.gen_range(2..=6usize);
        let labels = LabelSpace::new((0..m).map(|i| format!("c{i}")).collect()).unwrap();
        let n = rng.gen_range(2..=60usize);
        let gold: BTreeMap<String, usize> =
            (0..n).map(|i| (format!("d{i}"), rng.gen_range(0..m))).collect();
        let preds: BTreeMap<String, usize> =
            (0..n).map(|i| (format!("d{i}"), rng.gen_range(0..m))).collect();
        let micro = f1_scores(&preds, &gold, &labels, Averaging::Micro).unwrap();
        let macro_ = f1_scores(&preds, &gold, &labels, Averaging::Macro).unwrap();
        assert!((micro - f1_oracle(&preds, &gold, m, false)).abs() < 1e-12);
        assert!((macro_ - f1_oracle(&preds, &gold, m, true)).abs() < 1e-12);
    }
    println!("[PASS] micro/macro F1 matches the brute-force confusion-matrix oracle on 100 instances");
}

#[test]
fn criterion_10_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6D);
    for instance in 0..20 {
        let m = rng.gen_range(2..=4usize);
        let n_terms = rng.gen_range(2..=6usize);
        let n_docs = rng.gen_range(m..=10usize);
        let labels = LabelSpace::new((0..m).map(|i| format!("c{i}")).collect()).unwrap();
        let docs: Vec<lops::corpus::Document> = (0..n_docs)
            .map(|i| {
                let toks: Vec<String> = (0..n_terms)
                    .filter(|_| rng.gen_bool(0.7))
                    .map(|k| format!("t{k}"))
                    .chain(std::iter::once("t0".to_string()))
                    .collect();
                lops::corpus::Document::new(format!("d{i}"), toks.join(" "), None)
            })
            .collect();
        let features = vectorize(&docs, Weighting::RawCount, 1).unwrap();
        let pseudo = PseudoLabelSet::from_entries(
            (0..n_docs).map(|i| (format!("d{i}"), if i < m { i } else { rng.gen_range(0..m) })),
            "t",
            &labels,
        )
        .unwrap();
        let n_cols = features.n_terms();
        let mut model = TrainedModel {
            labels: labels.clone(),
            vocabulary: features.vocabulary.clone(),
            weights: (0..m)
                .map(|_| (0..n_cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            bias: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            config: ClassifierConfig::default(),
        };
        let l2 = if instance % 2 == 0 { 0.0 } else { 0.05 };
        let (wgrad, bgrad, _) = full_gradient(&model, &features, &pseudo, l2).unwrap();

        // central finite differences on the loss
        let h = 1e-6;
        let loss_at = |model: &TrainedModel| {
            let ce = lops::classifier::dataset_loss(model, &features, &pseudo);
            let reg: f64 = model
                .weights
                .iter()
                .flat_map(|row| row.iter().map(|w| w * w))
                .sum();
            ce + 0.5 * l2 * reg
        };
        for j in 0..m {
            for col in 0..n_cols {
                let orig = model.weights[j][col];
                model.weights[j][col] = orig + h;
                let up = loss_at(&model);
                model.weights[j][col] = orig - h;
                let down = loss_at(&model);
                model.weights[j][col] = orig;
                let fd = (up - down) / (2.0 * h);
                let g = wgrad[j][col];
                let denom = g.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-5,
                    "weight grad mismatch: analytic {g} vs fd {fd}"
                );
            }
            let orig = model.bias[j];
            model.bias[j] = orig + h;
            let up = loss_at(&model);
            model.bias[j] = orig - h;
            let down = loss_at(&model);
            model.bias[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = bgrad[j].abs().max(fd.abs()).max(1e-8);
            assert!(((bgrad[j] - fd) / denom).abs() < 1e-5);
        }
    }
    println!("[PASS] analytic gradients match central finite differences within 1e-5 on 20 instances");
}

#[test]
fn criterion_11_cli_determinism() {
    use lops::cli::{cmd_self_train, cmd_synth};
    use lops::config::RunConfig;

    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    let mut cfg = RunConfig {
        output_dir: synth_dir.to_string_lossy().into_owned(),
        synth_n_per_class: 100,
        rng_seed: 3,
        ..Default::default()
    };
    cmd_synth(&cfg).unwrap();

    cfg.corpus = Some(synth_dir.join("corpus.jsonl"));
    cfg.pseudo_labels = Some(synth_dir.join("pseudo_labels.jsonl"));
    cfg.n_its = 2;
    let run_dir = dir.path().join("run");
    cfg.output_dir = run_dir.to_string_lossy().into_owned();

    cmd_self_train(&cfg).unwrap();
    let manifest1 = std::fs::read(run_dir.join("manifest.json")).unwrap();
    let preds1 = std::fs::read(run_dir.join("predictions.jsonl")).unwrap();
    cmd_self_train(&cfg).unwrap();
    let manifest2 = std::fs::read(run_dir.join("manifest.json")).unwrap();
    let preds2 = std::fs::read(run_dir.join("predictions.jsonl")).unwrap();
    assert_eq!(manifest1, manifest2, "manifests differ between identical runs");
    assert_eq!(preds1, preds2, "prediction files differ between identical runs");
    println!("[PASS] identical self-train runs produce byte-identical manifests and predictions");
}
