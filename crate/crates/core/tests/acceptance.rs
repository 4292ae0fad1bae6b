//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N … PASS` line (visible with `--nocapture`).
//!
//! Run with `cargo test -p rncrf --test acceptance`.

mod common;

use common::{synthetic_corpus, synthetic_corpus_text};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rncrf::corpus::{
    build_vocab, decode_labels, encode_labels, load_embeddings, parse_conll, Category, LabelMode,
    Span,
};
use rncrf::crf::{
    log_partition, marginals, nll_and_gradients, viterbi, ScoreTable, TransitionMatrix,
};
use rncrf::dtrnn::{backward, build_tree, forward, RelationTable};
use rncrf::error::Error;
use rncrf::eval::{chunk_f1, tag};
use rncrf::features::{augment, FeatureConfig, NameLists, SentimentLexicon};
use rncrf::training::{
    grad_check, init_model, joint_nll_of, load_checkpoint, run_training, save_checkpoint,
    FeatureResources, Model, TrainConfig, TrainMode,
};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Brute-force CRF oracle, independent of the library's inference code.

fn enumerate_sequences(n: usize, labels: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        all = all
            .iter()
            .flat_map(|seq| {
                (0..labels).map(move |y| {
                    let mut s = seq.clone();
                    s.push(y);
                    s
                })
            })
            .collect();
    }
    all
}

fn sequence_score(seq: &[usize], scores: &ScoreTable, v: &TransitionMatrix) -> f64 {
    let mut total = 0.0;
    for (k, &y) in seq.iter().enumerate() {
        total += scores.scores[(k, y)];
    }
    for k in 0..seq.len().saturating_sub(1) {
        total += v.matrix[(seq[k], seq[k + 1])];
    }
    total
}

fn brute_log_z(scores: &ScoreTable, v: &TransitionMatrix) -> f64 {
    let all: Vec<f64> = enumerate_sequences(scores.len(), scores.label_count())
        .iter()
        .map(|s| sequence_score(s, scores, v))
        .collect();
    let max = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + all.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn brute_marginals(
    scores: &ScoreTable,
    v: &TransitionMatrix,
) -> (Array2<f64>, Array3<f64>, f64) {
    let (n, labels) = (scores.len(), scores.label_count());
    let log_z = brute_log_z(scores, v);
    let mut unary = Array2::<f64>::zeros((n, labels));
    let mut pairwise = Array3::<f64>::zeros((n.saturating_sub(1), labels, labels));
    for seq in enumerate_sequences(n, labels) {
        let p = (sequence_score(&seq, scores, v) - log_z).exp();
        for (k, &y) in seq.iter().enumerate() {
            unary[(k, y)] += p;
        }
        for k in 0..n.saturating_sub(1) {
            pairwise[(k, seq[k], seq[k + 1])] += p;
        }
    }
    (unary, pairwise, log_z)
}

/// Argmax with the tie rule: smallest label at the latest differing position.
fn brute_viterbi(scores: &ScoreTable, v: &TransitionMatrix) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for seq in enumerate_sequences(scores.len(), scores.label_count()) {
        let score = sequence_score(&seq, scores, v);
        let wins = match &best {
            None => true,
            Some((bs, bseq)) => {
                if (score - bs).abs() > 1e-9 {
                    score > *bs
                } else {
                    let k = (0..seq.len()).rev().find(|&k| seq[k] != bseq[k]);
                    k.map(|k| seq[k] < bseq[k]).unwrap_or(false)
                }
            }
        };
        if wins {
            best = Some((score, seq));
        }
    }
    best.unwrap().1
}

#[test]
fn criterion_1_crf_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for case in 0..120 {
        let n = rng.gen_range(1..=5);
        let labels = rng.gen_range(1..=5);
        let scores = ScoreTable::new(Array2::from_shape_fn((n, labels), |_| {
            rng.gen_range(-1.0..1.0)
        }));
        let v = TransitionMatrix {
            matrix: Array2::from_shape_fn((labels, labels), |_| rng.gen_range(-1.0..1.0)),
        };

        let log_z = log_partition(&scores, &v);
        let want_log_z = brute_log_z(&scores, &v);
        assert!(
            (log_z - want_log_z).abs() < 1e-10,
            "case {case}: logZ {log_z} vs {want_log_z}"
        );

        let m = marginals(&scores, &v);
        let (want_unary, want_pairwise, _) = brute_marginals(&scores, &v);
        for (a, b) in m.unary.iter().zip(want_unary.iter()) {
            assert!((a - b).abs() < 1e-10, "case {case}: unary marginal");
        }
        for (a, b) in m.pairwise.iter().zip(want_pairwise.iter()) {
            assert!((a - b).abs() < 1e-10, "case {case}: pairwise marginal");
        }

        assert_eq!(
            viterbi(&scores, &v),
            brute_viterbi(&scores, &v),
            "case {case}: viterbi"
        );
    }
    // All-zero potentials exercise the tie rule across every position.
    let scores = ScoreTable::new(Array2::zeros((5, 4)));
    let v = TransitionMatrix::zeros(4);
    assert_eq!(viterbi(&scores, &v), vec![0; 5]);
    assert_eq!(brute_viterbi(&scores, &v), vec![0; 5]);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 1 (CRF oracle equivalence, 120 instances): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------

/// Random rooted sentence text: every non-initial token attaches to some
/// earlier token, so the result is always a tree.
fn random_sentence_text(rng: &mut ChaCha8Rng, n: usize) -> String {
    let words = [
        "food", "great", "the", "we", "love", "menu", "staff", "slow", "tasty", "place",
    ];
    let pos = ["NOUN", "ADJ", "DET", "PRON", "VERB"];
    let relations = ["nsubj", "dobj", "det", "amod"];
    let labels = ["O", "BA", "IA", "BO", "IO"];
    let mut out = String::new();
    for i in 1..=n {
        let head = if i == 1 { 0 } else { rng.gen_range(1..i) };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            i,
            words[rng.gen_range(0..words.len())],
            pos[rng.gen_range(0..pos.len())],
            head,
            relations[rng.gen_range(0..relations.len())],
            labels[rng.gen_range(0..labels.len())],
        ));
    }
    out
}

#[test]
fn criterion_2_gradient_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut checked_pairs = 0;

    for case in 0..24 {
        let window = case % 3; // T ∈ {0, 1, 2}
        let mode = if case % 2 == 0 {
            TrainMode::Rncrf
        } else {
            TrainMode::RncrfO
        };
        let with_features = (case / 2) % 2 == 0;
        let d = rng.gen_range(3..=10);
        let n = rng.gen_range(1..=8);

        let text = random_sentence_text(&mut rng, n);
        let corpus = parse_conll(text.as_bytes()).unwrap();
        let mut config = TrainConfig {
            mode,
            dim: d,
            window,
            seed: 3000 + case as u64,
            ..TrainConfig::default()
        };
        let resources = if with_features {
            config.features = FeatureConfig::all();
            let mut lists = NameLists::default();
            lists.terms.insert("food".into());
            lists.terms.insert("the menu".into());
            lists.words.insert("food".into());
            lists.words.insert("menu".into());
            let lexicon = SentimentLexicon::load(&b"great\nlove\nslow\ntasty\n"[..]).unwrap();
            FeatureResources {
                name_lists: Some(lists),
                lexicon: Some(lexicon),
            }
        } else {
            FeatureResources::default()
        };

        let vocab = build_vocab(&corpus, 1);
        let embeddings = load_embeddings(&b""[..], &vocab, d, config.seed).unwrap();
        let mut model = init_model(&corpus, &config, vocab, embeddings, resources).unwrap();
        rncrf::training::randomize_crf_weights(&mut model, 4000 + case as u64, 0.4);

        let report = grad_check(&model, &corpus.sentences[0], 1e-5).unwrap();
        assert!(
            report.passes(1e-4),
            "case {case} (T={window}, mode={mode:?}, features={with_features}, d={d}, n={n}): \
             max rel err {}\n{report}",
            report.max_rel_err()
        );
        checked_pairs += 1;
    }

    assert!(checked_pairs >= 20);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("criterion 2 (gradient suite, {checked_pairs} model/sentence pairs): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------

fn overfit_config() -> TrainConfig {
    TrainConfig {
        dim: 25,
        window: 1,
        pretrain_epochs: 10,
        epochs: 200,
        seed: 17,
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_3_overfit_run() {
    let start = Instant::now();
    let corpus = synthetic_corpus();
    assert_eq!(corpus.len(), 20);
    let config = overfit_config();
    let vocab = build_vocab(&corpus, 1);
    let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
    let model = run_training(
        &corpus,
        &config,
        vocab,
        embeddings,
        FeatureResources::default(),
        |_| {},
        |_, _| {},
    )
    .unwrap();

    let gold: Vec<Vec<Span>> = corpus.sentences.iter().map(|s| s.spans()).collect();
    let pred: Vec<Vec<Span>> = corpus
        .sentences
        .iter()
        .map(|s| tag(&model, s).unwrap())
        .collect();
    let report = chunk_f1(&gold, &pred).unwrap();
    assert_eq!(
        report.aspect.f1, 1.0,
        "aspect F1 {} (P {}, R {})",
        report.aspect.f1, report.aspect.precision, report.aspect.recall
    );
    assert_eq!(
        report.opinion.f1, 1.0,
        "opinion F1 {} (P {}, R {})",
        report.opinion.f1, report.opinion.precision, report.opinion.recall
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!("criterion 3 (overfit run, train F1 1.0/1.0): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_4_dual_propagation() {
    // Figure-1-shaped sentence: "i like the food", root "like", with "food"
    // a dependent of the root and "the" below "food".
    let text = "1\ti\tPRON\t2\tnsubj\tO\n\
                2\tlike\tVERB\t0\troot\tBO\n\
                3\tthe\tDET\t4\tdet\tO\n\
                4\tfood\tNOUN\t2\tdobj\tBA\n";
    let corpus = parse_conll(text.as_bytes()).unwrap();
    let sentence = &corpus.sentences[0];
    let config = TrainConfig {
        dim: 6,
        window: 0,
        seed: 4004,
        ..TrainConfig::default()
    };
    let vocab = build_vocab(&corpus, 1);
    let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
    let mut model = init_model(
        &corpus,
        &config,
        vocab,
        embeddings,
        FeatureResources::default(),
    )
    .unwrap();
    rncrf::training::randomize_crf_weights(&mut model, 4005, 0.5);

    let food = model.vocab.lookup("food");
    let eps = 1e-5;

    // (a) The joint loss is sensitive to the embedding of "food" at all.
    let d = model.dim();
    let mut joint_grad_norm: f64 = 0.0;
    for i in 0..d {
        let mut hi = model.clone();
        hi.dtrnn.embeddings.matrix_mut()[(i, food)] += eps;
        let mut lo = model.clone();
        lo.dtrnn.embeddings.matrix_mut()[(i, food)] -= eps;
        let g = (joint_nll_of(&hi, sentence).unwrap() - joint_nll_of(&lo, sentence).unwrap())
            / (2.0 * eps);
        joint_grad_norm = joint_grad_norm.max(g.abs());
    }
    assert!(
        joint_grad_norm > 1e-8,
        "joint nll insensitive to x_food ({joint_grad_norm:e})"
    );

    // (b) Restrict the CRF error to the root position only: the error of
    // "like" must still reach the embedding of "food" through the tree.
    let relations = RelationTable::from_sentences(&corpus.sentences);
    let tree = build_tree(sentence, &relations).unwrap();
    let words: Vec<usize> = sentence
        .tokens
        .iter()
        .map(|t| model.vocab.lookup(&t.surface))
        .collect();
    let states = forward(&tree, &model.dtrnn, &words);
    let gold: Vec<usize> = sentence
        .tokens
        .iter()
        .map(|t| model.label_mode.index_of(t.label).unwrap())
        .collect();
    let crf = nll_and_gradients(
        &states.hidden.view(),
        &gold,
        &model.unary,
        &model.transitions,
    );
    let root = tree.root;
    assert_eq!(root, 1, "root should be the verb");
    let mut upstream = Array2::<f64>::zeros((d, sentence.len()));
    upstream.column_mut(root).assign(&crf.inputs.column(root));
    assert!(
        upstream.column(root).iter().any(|&e| e.abs() > 1e-12),
        "no error arrives at the root"
    );
    let grads = backward(&tree, &model.dtrnn, &states, &upstream.view());
    let through_tree = &grads.embedding_columns[&food];
    let max_component = through_tree.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    assert!(
        max_component > 1e-8,
        "root-only error does not reach x_food ({max_component:e})"
    );

    // Cross-check the root-only path against finite differences of the
    // matching linear functional Σ upstream ⊙ h.
    for i in 0..d {
        let functional = |m: &Model| {
            let states = forward(&tree, &m.dtrnn, &words);
            (&states.hidden * &upstream).sum()
        };
        let mut hi = model.clone();
        hi.dtrnn.embeddings.matrix_mut()[(i, food)] += eps;
        let mut lo = model.clone();
        lo.dtrnn.embeddings.matrix_mut()[(i, food)] -= eps;
        let numeric = (functional(&hi) - functional(&lo)) / (2.0 * eps);
        assert!(
            (through_tree[i] - numeric).abs() < 1e-6,
            "analytic {} vs numeric {numeric}",
            through_tree[i]
        );
    }

    println!(
        "criterion 4 (dual propagation, |grad x_food| = {max_component:.3e} > 1e-8): PASS"
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_5_bio_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    for case in 0..1000 {
        let n = rng.gen_range(1..=20);
        let mut spans = Vec::new();
        let mut pos = 1usize;
        while pos <= n {
            if rng.gen_bool(0.4) {
                let max_len = (n - pos + 1).min(4);
                let len = rng.gen_range(1..=max_len);
                let category = if rng.gen_bool(0.5) {
                    Category::Aspect
                } else {
                    Category::Opinion
                };
                spans.push(Span::new(pos, pos + len - 1, category));
                pos += len; // adjacent spans allowed
            } else {
                pos += 1;
            }
        }
        let labels = encode_labels(&spans, n, LabelMode::Full).unwrap();
        assert_eq!(labels.len(), n);
        let decoded = decode_labels(&labels);
        assert_eq!(decoded, spans, "case {case} failed round trip");
    }
    println!("criterion 5 (BIO round trip, 1000 span sets): PASS");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_6_determinism() {
    let corpus = synthetic_corpus();
    let config = TrainConfig {
        dim: 12,
        window: 1,
        pretrain_epochs: 3,
        epochs: 4,
        seed: 99,
        ..TrainConfig::default()
    };
    let run = || {
        let vocab = build_vocab(&corpus, 1);
        let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
        let model = run_training(
            &corpus,
            &config,
            vocab,
            embeddings,
            FeatureResources::default(),
            |_| {},
            |_, _| {},
        )
        .unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&model, &mut bytes).unwrap();
        bytes
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "checkpoints differ between identical runs");
    println!(
        "criterion 6 (determinism, {} byte checkpoints identical): PASS",
        first.len()
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_7_mode_consistency() {
    let corpus = synthetic_corpus();

    // (a) A window-0 model agrees with a window-free reference unary
    // computation on the sentence nll to 1e-12.
    {
        let config = TrainConfig {
            dim: 8,
            window: 0,
            seed: 7007,
            ..TrainConfig::default()
        };
        let vocab = build_vocab(&corpus, 1);
        let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
        let mut model = init_model(
            &corpus,
            &config,
            vocab,
            embeddings,
            FeatureResources::default(),
        )
        .unwrap();
        rncrf::training::randomize_crf_weights(&mut model, 7008, 0.5);

        for sentence in corpus.sentences.iter().take(5) {
            let relations = RelationTable::from_sentences(&corpus.sentences);
            let tree = build_tree(sentence, &relations).unwrap();
            let words: Vec<usize> = sentence
                .tokens
                .iter()
                .map(|t| model.vocab.lookup(&t.surface))
                .collect();
            let states = forward(&tree, &model.dtrnn, &words);
            let gold: Vec<usize> = sentence
                .tokens
                .iter()
                .map(|t| model.label_mode.index_of(t.label).unwrap())
                .collect();

            // Reference: plain per-position linear scores, no window logic.
            let n = sentence.len();
            let labels = model.label_count();
            let mut reference = Array2::<f64>::zeros((n, labels));
            for k in 0..n {
                for y in 0..labels {
                    let mut dot = 0.0;
                    for j in 0..model.dim() {
                        dot += model.unary.center[(y, j)] * states.hidden[(j, k)];
                    }
                    reference[(k, y)] = dot;
                }
            }
            let reference = ScoreTable::new(reference);
            let mut reference_nll = log_partition(&reference, &model.transitions);
            for (k, &y) in gold.iter().enumerate() {
                reference_nll -= reference.scores[(k, y)];
            }
            for k in 0..n - 1 {
                reference_nll -= model.transitions.matrix[(gold[k], gold[k + 1])];
            }

            let nll = joint_nll_of(&model, sentence).unwrap();
            assert!(
                (nll - reference_nll).abs() < 1e-12,
                "window-0 nll {nll} vs reference {reference_nll}"
            );
        }
    }

    // (b) The feature path with every feature off is bit-identical to the
    // plain model, from a single augment call up to whole checkpoints.
    {
        let hidden = Array2::from_shape_fn((6, 4), |(i, j)| (i * 7 + j) as f64 * 0.013);
        let empty = Array2::<f64>::zeros((0, 4));
        let stacked = augment(&hidden.view(), &empty.view());
        assert_eq!(stacked, hidden);

        let config = TrainConfig {
            dim: 10,
            window: 1,
            pretrain_epochs: 1,
            epochs: 2,
            seed: 7010,
            ..TrainConfig::default()
        };
        assert_eq!(config.features.dim(), 0);
        let run = |resources: FeatureResources| {
            let vocab = build_vocab(&corpus, 1);
            let embeddings =
                load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
            let model = run_training(
                &corpus, &config, vocab, embeddings, resources, |_| {}, |_, _| {},
            )
            .unwrap();
            let mut bytes = Vec::new();
            save_checkpoint(&model, &mut bytes).unwrap();
            bytes
        };
        // Attaching unused resources must change nothing.
        let with_idle_resources = FeatureResources {
            lexicon: Some(SentimentLexicon::load(&b"love\n"[..]).unwrap()),
            name_lists: None,
        };
        assert_eq!(run(FeatureResources::default()), run(with_idle_resources));
    }

    // (c) The aspect-only mode trains and tags with a three-label set.
    {
        let config = TrainConfig {
            mode: TrainMode::RncrfO,
            dim: 10,
            window: 1,
            pretrain_epochs: 1,
            epochs: 2,
            seed: 7011,
            ..TrainConfig::default()
        };
        let vocab = build_vocab(&corpus, 1);
        let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
        let model = run_training(
            &corpus,
            &config,
            vocab,
            embeddings,
            FeatureResources::default(),
            |_| {},
            |_, _| {},
        )
        .unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&model, &mut bytes).unwrap();
        // Header: magic(6) then u32 d, u32 |L|.
        let label_count = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        assert_eq!(label_count, 3);
        let spans = tag(&model, &corpus.sentences[0]).unwrap();
        assert!(spans.iter().all(|s| s.category == Category::Aspect));
    }

    // (d) Every ablation mode runs end to end on the synthetic corpus.
    {
        let modes: [(TrainMode, usize, bool); 5] = [
            (TrainMode::DtrnnSoftmax, 0, false),
            (TrainMode::CrfEmb, 1, false),
            (TrainMode::Rncrf, 1, false),
            (TrainMode::RncrfO, 1, false),
            (TrainMode::Rncrf, 1, true), // the feature-augmented variant
        ];
        for (mode, window, with_features) in modes {
            let mut config = TrainConfig {
                mode,
                dim: 8,
                window,
                pretrain_epochs: 1,
                epochs: 1,
                seed: 7012,
                ..TrainConfig::default()
            };
            let resources = if with_features {
                config.features = FeatureConfig::all();
                let lexicon = SentimentLexicon::load(
                    &b"like\nlove\nhate\nenjoy\nadmire\nrocks\nstinks\nshines\ndisappoints\ndelights\n"[..],
                )
                .unwrap();
                FeatureResources {
                    name_lists: None, // extracted from the corpus
                    lexicon: Some(lexicon),
                }
            } else {
                FeatureResources::default()
            };
            let vocab = build_vocab(&corpus, 1);
            let embeddings =
                load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
            let model = run_training(
                &corpus, &config, vocab, embeddings, resources, |_| {}, |_, _| {},
            )
            .unwrap_or_else(|e| panic!("mode {mode} failed to train: {e}"));
            tag(&model, &corpus.sentences[0])
                .unwrap_or_else(|e| panic!("mode {mode} failed to tag: {e}"));
        }
    }

    println!("criterion 7 (mode consistency: window-0 reference, feature-off identity, rncrf-o |L|=3, 5 ablations): PASS");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_8_numerical_stability() {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    for _ in 0..20 {
        let n = rng.gen_range(1..=12);
        let labels = rng.gen_range(2..=5);
        let scores = ScoreTable::new(Array2::from_shape_fn((n, labels), |_| {
            rng.gen_range(-1000.0..1000.0)
        }));
        let v = TransitionMatrix {
            matrix: Array2::from_shape_fn((labels, labels), |_| rng.gen_range(-1000.0..1000.0)),
        };
        let log_z = log_partition(&scores, &v);
        assert!(log_z.is_finite(), "logZ overflowed: {log_z}");
        let m = marginals(&scores, &v);
        assert!((m.log_z - log_z).abs() < 1e-9);
        for k in 0..n {
            let row: f64 = m.unary.row(k).sum();
            assert!(
                (row - 1.0).abs() < 1e-8,
                "unary row {k} sums to {row} at score scale 1e3"
            );
        }
        assert!(m.unary.iter().all(|&p| p.is_finite()));
        assert!(m.pairwise.iter().all(|&p| p.is_finite()));
    }
    println!("criterion 8 (numerical stability at |score| up to 1e3): PASS");
}

// ---------------------------------------------------------------------------
// Supporting end-to-end checks that the criteria above rely on.

#[test]
fn checkpoint_errors_surface_as_checkpoint_failures() {
    let corpus = synthetic_corpus();
    let config = TrainConfig {
        dim: 4,
        pretrain_epochs: 0,
        epochs: 0,
        seed: 1,
        ..TrainConfig::default()
    };
    let vocab = build_vocab(&corpus, 1);
    let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
    let model = init_model(
        &corpus,
        &config,
        vocab,
        embeddings,
        FeatureResources::default(),
    )
    .unwrap();
    let mut bytes = Vec::new();
    save_checkpoint(&model, &mut bytes).unwrap();
    let reloaded = load_checkpoint(&bytes[..]).unwrap();
    assert_eq!(reloaded.dim(), 4);
    assert!(matches!(
        load_checkpoint(&bytes[..20]),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn synthetic_corpus_has_the_documented_shape() {
    let corpus = synthetic_corpus();
    assert_eq!(corpus.len(), 20);
    let relations = RelationTable::from_sentences(&corpus.sentences);
    // Three corpus relations plus the reserved unknown slot.
    assert_eq!(relations.len(), 4);
    let stats = rncrf::corpus::corpus_stats(&corpus);
    assert!(stats.aspect_spans > 0);
    assert!(stats.opinion_spans > 0);
    // A consistent labeling exists: every surface maps to exactly one label.
    let mut seen = std::collections::HashMap::new();
    for sentence in &corpus.sentences {
        for token in &sentence.tokens {
            let entry = seen
                .entry(token.surface.clone())
                .or_insert(token.label);
            assert_eq!(*entry, token.label, "word {:?} relabeled", token.surface);
        }
    }
    let _ = synthetic_corpus_text();
}

#[test]
fn joint_training_really_learns_the_corpus() {
    // Shorter companion to criterion 3: loss decreases and F1 climbs.
    let corpus = synthetic_corpus();
    let config = TrainConfig {
        dim: 12,
        window: 1,
        pretrain_epochs: 2,
        epochs: 30,
        seed: 5,
        ..TrainConfig::default()
    };
    let vocab = build_vocab(&corpus, 1);
    let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed).unwrap();
    let mut losses = Vec::new();
    let model = run_training(
        &corpus,
        &config,
        vocab,
        embeddings,
        FeatureResources::default(),
        |_| {},
        |stats, _| losses.push(stats.loss_per_token),
    )
    .unwrap();
    assert!(losses.last().unwrap() < &losses[0]);
    let gold: Vec<Vec<Span>> = corpus.sentences.iter().map(|s| s.spans()).collect();
    let pred: Vec<Vec<Span>> = corpus
        .sentences
        .iter()
        .map(|s| tag(&model, s).unwrap())
        .collect();
    let report = chunk_f1(&gold, &pred).unwrap();
    assert!(report.aspect.f1 > 0.8, "aspect F1 {}", report.aspect.f1);
}
