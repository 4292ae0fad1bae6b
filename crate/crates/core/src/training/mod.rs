//! Training orchestration: model assembly, softmax pretraining of the tree
//! network, joint maximum-likelihood training, gradient checking and
//! checkpointing.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use optim::{adagrad_step, decayed_rate, sgd_step, AdaGradState, ADAGRAD_EPS};

use crate::corpus::{Corpus, EmbeddingMatrix, LabelMode, Sentence, Vocabulary};
use crate::crf::{
    log_partition, nll_and_gradients, unary_scores, TransitionMatrix, UnaryWeights,
};
use crate::dtrnn::{
    backward, build_tree, forward, init_params, softmax_head, DepTree, DtrnnGradients,
    DtrnnParams, HiddenStates, RelationTable,
};
use crate::error::Error;
use crate::features::{
    augment, extract_name_lists, featurize, hidden_rows, FeatureConfig, NameLists,
    SentimentLexicon,
};
use crate::Result;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

/// Which model variant to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Full joint model over the five-label set.
    Rncrf,
    /// Joint model with opinion labels dropped (`{BA, IA, O}`).
    RncrfO,
    /// Tree network with a per-token softmax instead of a chain CRF;
    /// realized as a window-0 CRF whose transition matrix stays at zero.
    DtrnnSoftmax,
    /// Chain CRF directly over the word embeddings; the tree network is
    /// bypassed and its parameters never move.
    CrfEmb,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Rncrf => "rncrf",
            TrainMode::RncrfO => "rncrf-o",
            TrainMode::DtrnnSoftmax => "dtrnn-softmax",
            TrainMode::CrfEmb => "crf-emb",
        }
    }

    /// Label inventory implied by the mode.
    pub fn label_mode(&self) -> LabelMode {
        match self {
            TrainMode::RncrfO => LabelMode::AspectOnly,
            _ => LabelMode::Full,
        }
    }

    /// Whether sentence encoding runs through the dependency-tree network.
    pub fn uses_tree(&self) -> bool {
        !matches!(self, TrainMode::CrfEmb)
    }

    /// Whether the pairwise transition matrix is held at zero.
    pub fn transitions_frozen(&self) -> bool {
        matches!(self, TrainMode::DtrnnSoftmax)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rncrf" => Ok(TrainMode::Rncrf),
            "rncrf-o" => Ok(TrainMode::RncrfO),
            "dtrnn-softmax" => Ok(TrainMode::DtrnnSoftmax),
            "crf-emb" => Ok(TrainMode::CrfEmb),
            other => Err(Error::data(format!(
                "unknown mode {other:?} (expected rncrf, rncrf-o, dtrnn-softmax or crf-emb)"
            ))),
        }
    }
}

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Hidden / embedding dimension `d`.
    pub dim: usize,
    /// Context-window parameter `T` (the unary clique reads `2T+1` vectors).
    pub window: usize,
    /// Mini-batch size of the pretraining phase.
    pub batch_size: usize,
    /// Batch size of the joint phase; the default of 1 updates per sentence.
    pub joint_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    /// Initial joint-phase learning rate `η₀`.
    pub joint_lr: f64,
    /// Decay constant `κ` in `η₀ / (1 + e/κ)`.
    pub decay: f64,
    /// Joint-phase epochs.
    pub epochs: usize,
    pub seed: u64,
    pub features: FeatureConfig,
    /// Optional global gradient-norm clip.
    pub clip: Option<f64>,
    /// Keep the embedding matrix fixed in both phases.
    pub freeze_embeddings: bool,
    /// Vocabulary frequency threshold.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Rncrf,
            dim: 300,
            window: 1,
            batch_size: 25,
            joint_batch_size: 1,
            pretrain_lr: 0.02,
            pretrain_epochs: 4,
            joint_lr: 0.02,
            decay: 10.0,
            epochs: 10,
            seed: 1,
            features: FeatureConfig::default(),
            clip: None,
            freeze_embeddings: false,
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::data("dim must be positive"));
        }
        if self.batch_size == 0 || self.joint_batch_size == 0 {
            return Err(Error::data("batch sizes must be at least 1"));
        }
        if self.pretrain_lr < 0.0 || self.joint_lr < 0.0 {
            return Err(Error::data("learning rates must be nonnegative"));
        }
        if self.decay <= 0.0 {
            return Err(Error::data("decay constant must be positive"));
        }
        if self.min_count == 0 {
            return Err(Error::data("min_count must be at least 1"));
        }
        if self.mode == TrainMode::DtrnnSoftmax && (self.window != 0 || self.features.dim() != 0)
        {
            return Err(Error::data(
                "dtrnn-softmax mode requires window 0 and no appended features",
            ));
        }
        Ok(())
    }

    /// Flat `key=value` form, one pair per line.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            ("mode".into(), self.mode.to_string()),
            ("dim".into(), self.dim.to_string()),
            ("window".into(), self.window.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("joint_batch_size".into(), self.joint_batch_size.to_string()),
            ("pretrain_lr".into(), self.pretrain_lr.to_string()),
            ("pretrain_epochs".into(), self.pretrain_epochs.to_string()),
            ("lr".into(), self.joint_lr.to_string()),
            ("decay".into(), self.decay.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("features".into(), self.features.flags()),
            (
                "name_list_min_freq".into(),
                self.features.min_term_freq.to_string(),
            ),
            (
                "name_list_min_prob".into(),
                self.features.min_word_prob.to_string(),
            ),
            ("clip".into(), opt(&self.clip)),
            (
                "freeze_embeddings".into(),
                self.freeze_embeddings.to_string(),
            ),
            ("min_count".into(), self.min_count.to_string()),
        ]
    }

    /// Apply one `key=value` pair; returns false when the key is not a
    /// config field so callers can layer their own keys on the same file.
    pub fn apply_key_value(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::data(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "dim" => self.dim = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "joint_batch_size" => self.joint_batch_size = num(key, value)?,
            "pretrain_lr" => self.pretrain_lr = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "lr" => self.joint_lr = num(key, value)?,
            "decay" => self.decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "features" => self.features.set_flags(value)?,
            "name_list_min_freq" => self.features.min_term_freq = num(key, value)?,
            "name_list_min_prob" => self.features.min_word_prob = num(key, value)?,
            "clip" => {
                self.clip = if value.is_empty() {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "freeze_embeddings" => self.freeze_embeddings = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parse a config file, returning any pairs this struct does not own.
    pub fn apply_file<R: Read>(&mut self, reader: R) -> Result<Vec<(String, String)>> {
        let mut extras = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::parse(idx + 1, format!("expected key=value, found {trimmed:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !self.apply_key_value(key, value)? {
                extras.push((key.to_string(), value.to_string()));
            }
        }
        Ok(extras)
    }
}

/// Fixed feature resources referenced by a model.
#[derive(Debug, Clone, Default)]
pub struct FeatureResources {
    pub name_lists: Option<NameLists>,
    pub lexicon: Option<SentimentLexicon>,
}

/// A complete trained (or initialized) model.
#[derive(Debug, Clone)]
pub struct Model {
    pub dtrnn: DtrnnParams,
    pub unary: UnaryWeights,
    pub transitions: TransitionMatrix,
    pub relations: RelationTable,
    pub vocab: Vocabulary,
    pub label_mode: LabelMode,
    pub config: TrainConfig,
    pub resources: FeatureResources,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.dtrnn.dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.features.dim()
    }

    /// CRF input dimension `D = d + feature_dim`.
    pub fn input_dim(&self) -> usize {
        self.dim() + self.feature_dim()
    }

    pub fn label_count(&self) -> usize {
        self.label_mode.len()
    }

    /// Dimensional invariants plus feature-resource presence.
    pub fn validate(&self) -> Result<()> {
        self.validate_dimensions()?;
        if self.config.features.namelist && self.resources.name_lists.is_none() {
            return Err(Error::data(
                "name-list feature enabled but no name lists attached",
            ));
        }
        if self.config.features.lexicon && self.resources.lexicon.is_none() {
            return Err(Error::data(
                "lexicon feature enabled but no sentiment lexicon attached",
            ));
        }
        Ok(())
    }

    /// Check the dimensional invariants tying the parts together.
    pub fn validate_dimensions(&self) -> Result<()> {
        let d = self.dim();
        if self.dtrnn.transform.dim() != (d, d) {
            return Err(Error::dim("transform matrix is not d × d"));
        }
        if self.dtrnn.relation.len() != self.relations.len() {
            return Err(Error::dim(format!(
                "{} relation matrices for {} relations",
                self.dtrnn.relation.len(),
                self.relations.len()
            )));
        }
        if self.dtrnn.relation.iter().any(|m| m.dim() != (d, d)) {
            return Err(Error::dim("relation matrix is not d × d"));
        }
        if self.dtrnn.bias.len() != d {
            return Err(Error::dim("bias length differs from d"));
        }
        if self.dtrnn.embeddings.dim() != d {
            return Err(Error::dim("embedding rows differ from d"));
        }
        if self.dtrnn.embeddings.vocab_size() != self.vocab.len() {
            return Err(Error::dim(format!(
                "embedding columns {} differ from vocabulary size {}",
                self.dtrnn.embeddings.vocab_size(),
                self.vocab.len()
            )));
        }
        if self.config.dim != d {
            return Err(Error::dim("config dim differs from parameters"));
        }
        if self.unary.input_dim() != self.input_dim() {
            return Err(Error::dim(format!(
                "unary weights expect input dimension {}, model provides {}",
                self.unary.input_dim(),
                self.input_dim()
            )));
        }
        if self.unary.window() != self.config.window {
            return Err(Error::dim("unary window differs from config"));
        }
        let labels = self.label_count();
        if self.unary.label_count() != labels || self.transitions.label_count() != labels {
            return Err(Error::dim("label count differs across weight blocks"));
        }
        if self.label_mode != self.config.mode.label_mode() {
            return Err(Error::dim("label mode inconsistent with train mode"));
        }
        Ok(())
    }
}

/// Assemble a freshly initialized model for a training corpus.
///
/// The tree-network matrices draw from the seeded uniform initializer; all
/// CRF weights start at zero. Name lists are extracted from the corpus when
/// the feature is enabled and none were supplied.
pub fn init_model(
    corpus: &Corpus,
    config: &TrainConfig,
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix,
    mut resources: FeatureResources,
) -> Result<Model> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::data("cannot initialize a model on an empty corpus"));
    }
    if config.features.namelist && resources.name_lists.is_none() {
        resources.name_lists = Some(extract_name_lists(
            corpus,
            config.features.min_term_freq,
            config.features.min_word_prob,
        )?);
    }
    let relations = RelationTable::from_sentences(&corpus.sentences);
    let dtrnn = init_params(config.dim, &relations, config.seed, embeddings)?;
    let labels = config.mode.label_mode().len();
    let model = Model {
        unary: UnaryWeights::zeros(labels, config.dim + config.features.dim(), config.window),
        transitions: TransitionMatrix::zeros(labels),
        dtrnn,
        relations,
        vocab,
        label_mode: config.mode.label_mode(),
        config: config.clone(),
        resources,
    };
    model.validate()?;
    Ok(model)
}

/// Per-epoch progress snapshot.
#[derive(Debug, Clone)]
pub struct EpochStats {
    /// `"pretrain"` or `"joint"`.
    pub phase: &'static str,
    /// 0-based epoch index.
    pub epoch: usize,
    /// Loss averaged per token over the epoch.
    pub loss_per_token: f64,
    pub learning_rate: f64,
}

/// A sentence preprocessed for repeated passes: vocabulary indices, gold
/// label indices, the dependency tree (absent in embedding-only mode) and
/// the fixed feature block.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub id: String,
    pub words: Vec<usize>,
    pub gold: Vec<usize>,
    pub tree: Option<DepTree>,
    pub features: Array2<f64>,
}

pub(crate) fn prepare_sentence(model: &Model, sentence: &Sentence) -> Result<Prepared> {
    let words: Vec<usize> = sentence
        .tokens
        .iter()
        .map(|t| model.vocab.lookup(&t.surface))
        .collect();
    let gold = sentence
        .tokens
        .iter()
        .map(|t| {
            let projected = model.label_mode.project(t.label);
            model
                .label_mode
                .index_of(projected)
                .expect("projection lands in the active label set")
        })
        .collect();
    let tree = if model.config.mode.uses_tree() {
        Some(build_tree(sentence, &model.relations)?)
    } else {
        None
    };
    let features = featurize(
        sentence,
        model.resources.name_lists.as_ref(),
        model.resources.lexicon.as_ref(),
        &model.config.features,
    )?;
    Ok(Prepared {
        id: sentence.id.clone(),
        words,
        gold,
        tree,
        features,
    })
}

fn prepare_corpus(model: &Model, corpus: &Corpus) -> Result<Vec<Prepared>> {
    corpus
        .sentences
        .iter()
        .map(|s| prepare_sentence(model, s))
        .collect()
}

/// Hidden states (when a tree is used) and the `D × n` CRF input matrix.
pub(crate) fn encode_inputs(
    model: &Model,
    prep: &Prepared,
) -> (Option<HiddenStates>, Array2<f64>) {
    match &prep.tree {
        Some(tree) => {
            let states = forward(tree, &model.dtrnn, &prep.words);
            let inputs = augment(&states.hidden.view(), &prep.features.view());
            (Some(states), inputs)
        }
        None => {
            let d = model.dim();
            let mut hidden = Array2::<f64>::zeros((d, prep.words.len()));
            for (p, &w) in prep.words.iter().enumerate() {
                hidden.column_mut(p).assign(&model.dtrnn.embeddings.column(w));
            }
            let inputs = augment(&hidden.view(), &prep.features.view());
            (None, inputs)
        }
    }
}

/// Joint negative log-likelihood of one prepared sentence.
pub(crate) fn joint_nll(model: &Model, prep: &Prepared) -> f64 {
    let (_, inputs) = encode_inputs(model, prep);
    let scores = unary_scores(&inputs.view(), &model.unary);
    let log_z = log_partition(&scores, &model.transitions);
    let mut gold_score = 0.0;
    for (k, &y) in prep.gold.iter().enumerate() {
        gold_score += scores.scores[(k, y)];
    }
    for k in 0..prep.gold.len().saturating_sub(1) {
        gold_score += model.transitions.matrix[(prep.gold[k], prep.gold[k + 1])];
    }
    log_z - gold_score
}

/// Joint negative log-likelihood of one sentence under a model.
pub fn joint_nll_of(model: &Model, sentence: &Sentence) -> Result<f64> {
    let prep = prepare_sentence(model, sentence)?;
    Ok(joint_nll(model, &prep))
}

/// Full gradient bundle for one sentence under the joint objective.
#[derive(Debug, Clone)]
pub(crate) struct SentenceGrads {
    pub nll: f64,
    pub unary: UnaryWeights,
    pub transitions: Array2<f64>,
    pub dtrnn: DtrnnGradients,
}

pub(crate) fn joint_grads(model: &Model, prep: &Prepared) -> SentenceGrads {
    let (states, inputs) = encode_inputs(model, prep);
    let crf = nll_and_gradients(
        &inputs.view(),
        &prep.gold,
        &model.unary,
        &model.transitions,
    );
    let input_grad_view = crf.inputs.view();
    let upstream = hidden_rows(&input_grad_view, model.dim());
    let dtrnn = match (&prep.tree, &states) {
        (Some(tree), Some(states)) => backward(tree, &model.dtrnn, states, &upstream),
        _ => {
            // Embedding-only mode: the input gradient lands directly on the
            // embedding columns of the words.
            let mut grads = DtrnnGradients::zeros_like(&model.dtrnn);
            for (p, &w) in prep.words.iter().enumerate() {
                grads
                    .embedding_columns
                    .entry(w)
                    .or_insert_with(|| Array1::zeros(model.dim()))
                    .scaled_add(1.0, &upstream.column(p));
            }
            grads
        }
    };
    SentenceGrads {
        nll: crf.nll,
        unary: crf.unary,
        transitions: crf.transitions,
        dtrnn,
    }
}

impl SentenceGrads {
    fn zeros(model: &Model) -> Self {
        SentenceGrads {
            nll: 0.0,
            unary: UnaryWeights::zeros(
                model.label_count(),
                model.input_dim(),
                model.config.window,
            ),
            transitions: Array2::zeros((model.label_count(), model.label_count())),
            dtrnn: DtrnnGradients::zeros_like(&model.dtrnn),
        }
    }

    fn accumulate(&mut self, other: &SentenceGrads) {
        self.nll += other.nll;
        for (a, b) in self.unary.iter_mut().zip(other.unary.iter()) {
            *a += b;
        }
        self.transitions += &other.transitions;
        self.dtrnn.transform += &other.dtrnn.transform;
        for (a, b) in self.dtrnn.relation.iter_mut().zip(&other.dtrnn.relation) {
            *a += b;
        }
        self.dtrnn.bias += &other.dtrnn.bias;
        for (word, grad) in &other.dtrnn.embedding_columns {
            self.dtrnn
                .embedding_columns
                .entry(*word)
                .and_modify(|g| g.scaled_add(1.0, grad))
                .or_insert_with(|| grad.clone());
        }
    }

    fn scale(&mut self, c: f64) {
        for m in self.unary.iter_mut() {
            m.mapv_inplace(|x| x * c);
        }
        self.transitions.mapv_inplace(|x| x * c);
        self.dtrnn.transform.mapv_inplace(|x| x * c);
        for m in &mut self.dtrnn.relation {
            m.mapv_inplace(|x| x * c);
        }
        self.dtrnn.bias.mapv_inplace(|x| x * c);
        for grad in self.dtrnn.embedding_columns.values_mut() {
            grad.mapv_inplace(|x| x * c);
        }
    }

    fn squared_norm(&self) -> f64 {
        let mut total = 0.0;
        for m in self.unary.iter() {
            total += m.iter().map(|x| x * x).sum::<f64>();
        }
        total += self.transitions.iter().map(|x| x * x).sum::<f64>();
        total += self.dtrnn.transform.iter().map(|x| x * x).sum::<f64>();
        for m in &self.dtrnn.relation {
            total += m.iter().map(|x| x * x).sum::<f64>();
        }
        total += self.dtrnn.bias.iter().map(|x| x * x).sum::<f64>();
        for grad in self.dtrnn.embedding_columns.values() {
            total += grad.iter().map(|x| x * x).sum::<f64>();
        }
        total
    }
}

/// Epoch-level shuffle stream derived from `(seed, phase, epoch)`.
fn epoch_rng(seed: u64, phase: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 32) ^ (epoch as u64 + 1));
    rng
}

/// Pretrain the tree network with a temporary softmax head and mini-batch
/// AdaGrad on the cross-entropy error.
///
/// `vocab` indexes the embedding columns of `params`. Returns the updated
/// parameters together with the trained head weights (`|L| × d`). With zero
/// epochs the parameters come back unchanged and the head is all zeros.
/// Embedding-only mode has nothing to pretrain and returns its inputs
/// untouched.
pub fn pretrain(
    corpus: &Corpus,
    config: &TrainConfig,
    vocab: &Vocabulary,
    params: DtrnnParams,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(DtrnnParams, Array2<f64>)> {
    config.validate()?;
    let labels = config.mode.label_mode().len();
    let mut head = Array2::<f64>::zeros((labels, params.dim()));
    if !config.mode.uses_tree() || config.pretrain_epochs == 0 {
        return Ok((params, head));
    }
    let mut params = params;
    let label_mode = config.mode.label_mode();
    let relations = RelationTable::from_sentences(&corpus.sentences);
    if relations.len() != params.relation.len() {
        return Err(Error::dim(format!(
            "{} relation matrices for {} corpus relations",
            params.relation.len(),
            relations.len()
        )));
    }

    struct Prep {
        id: String,
        words: Vec<usize>,
        gold: Vec<usize>,
        tree: DepTree,
    }
    let prepared: Vec<Prep> = corpus
        .sentences
        .iter()
        .map(|s| -> Result<Prep> {
            Ok(Prep {
                id: s.id.clone(),
                words: s.tokens.iter().map(|t| vocab.lookup(&t.surface)).collect(),
                gold: s
                    .tokens
                    .iter()
                    .map(|t| {
                        label_mode
                            .index_of(label_mode.project(t.label))
                            .expect("projected label in set")
                    })
                    .collect(),
                tree: build_tree(s, &relations)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut state = AdaGradState::new(&params, labels);
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..config.pretrain_epochs {
        let mut rng = epoch_rng(config.seed, 0, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;

        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut head_grad = Array2::<f64>::zeros((labels, params.dim()));
            let mut tree_grads = DtrnnGradients::zeros_like(&params);
            let mut batch_loss = 0.0;

            for &idx in batch {
                let prep = &prepared[idx];
                let states = forward(&prep.tree, &params, &prep.words);
                let out = softmax_head(&states, &head.view(), &prep.gold);
                if !out.loss.is_finite() {
                    return Err(Error::NonFinite {
                        phase: "pretrain",
                        epoch,
                        unit: format!(
                            "batch of {} sentences starting with sentence {}",
                            batch.len(),
                            prepared[batch[0]].id
                        ),
                    });
                }
                batch_loss += out.loss;
                epoch_loss += out.loss * prep.words.len() as f64;
                epoch_tokens += prep.words.len();
                head_grad.scaled_add(scale, &out.head);
                let grads = backward(&prep.tree, &params, &states, &out.upstream.view());
                tree_grads.transform.scaled_add(scale, &grads.transform);
                for (a, b) in tree_grads.relation.iter_mut().zip(&grads.relation) {
                    a.scaled_add(scale, b);
                }
                tree_grads.bias.scaled_add(scale, &grads.bias);
                for (word, grad) in &grads.embedding_columns {
                    tree_grads
                        .embedding_columns
                        .entry(*word)
                        .and_modify(|g| g.scaled_add(scale, grad))
                        .or_insert_with(|| grad * scale);
                }
            }
            let _ = batch_loss;

            adagrad_step(
                &mut params.transform,
                &tree_grads.transform,
                &mut state.transform,
                config.pretrain_lr,
            );
            for ((param, grad), acc) in params
                .relation
                .iter_mut()
                .zip(&tree_grads.relation)
                .zip(&mut state.relation)
            {
                adagrad_step(param, grad, acc, config.pretrain_lr);
            }
            adagrad_step(
                &mut params.bias,
                &tree_grads.bias,
                &mut state.bias,
                config.pretrain_lr,
            );
            if !config.freeze_embeddings {
                for (word, grad) in &tree_grads.embedding_columns {
                    optim::adagrad_step_column(
                        params.embeddings.matrix_mut(),
                        *word,
                        grad,
                        &mut state.embeddings,
                        config.pretrain_lr,
                    );
                }
            }
            adagrad_step(&mut head, &head_grad, &mut state.head, config.pretrain_lr);
        }

        on_epoch(&EpochStats {
            phase: "pretrain",
            epoch,
            loss_per_token: epoch_loss / epoch_tokens.max(1) as f64,
            learning_rate: config.pretrain_lr,
        });
    }
    Ok((params, head))
}

/// Joint maximum-likelihood training of the whole stack with decayed SGD.
///
/// Updates all tree parameters, the unary weights and the transition matrix
/// (embedding-only mode leaves the tree matrices untouched; the softmax
/// variant keeps transitions at zero; `freeze_embeddings` pins the
/// embedding matrix). The callback fires once per epoch with the loss per
/// token and the model as trained so far.
pub fn train_joint(
    corpus: &Corpus,
    config: &TrainConfig,
    mut model: Model,
    mut on_epoch: impl FnMut(&EpochStats, &Model),
) -> Result<Model> {
    config.validate()?;
    model.config = config.clone();
    model.label_mode = config.mode.label_mode();
    model.validate()?;
    let prepared = prepare_corpus(&model, corpus)?;
    let total_tokens: usize = prepared.iter().map(|p| p.words.len()).sum();
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..config.epochs {
        let lr = decayed_rate(config.joint_lr, epoch, config.decay);
        let mut rng = epoch_rng(config.seed, 1, epoch);
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;

        for batch in order.chunks(config.joint_batch_size) {
            let mut total = SentenceGrads::zeros(&model);
            for &idx in batch {
                let prep = &prepared[idx];
                let grads = joint_grads(&model, prep);
                if !grads.nll.is_finite() {
                    return Err(Error::NonFinite {
                        phase: "joint",
                        epoch,
                        unit: format!("sentence {}", prep.id),
                    });
                }
                epoch_nll += grads.nll;
                total.accumulate(&grads);
            }
            total.scale(1.0 / batch.len() as f64);
            if let Some(max_norm) = config.clip {
                let norm = total.squared_norm().sqrt();
                if norm > max_norm {
                    total.scale(max_norm / norm);
                }
            }
            apply_joint_step(&mut model, &total, lr);
        }

        on_epoch(
            &EpochStats {
                phase: "joint",
                epoch,
                loss_per_token: epoch_nll / total_tokens.max(1) as f64,
                learning_rate: lr,
            },
            &model,
        );
    }
    Ok(model)
}

fn apply_joint_step(model: &mut Model, grads: &SentenceGrads, lr: f64) {
    for (param, grad) in model.unary.iter_mut().zip(grads.unary.iter()) {
        sgd_step(param, grad, lr);
    }
    if !model.config.mode.transitions_frozen() {
        sgd_step(&mut model.transitions.matrix, &grads.transitions, lr);
    }
    if model.config.mode.uses_tree() {
        sgd_step(&mut model.dtrnn.transform, &grads.dtrnn.transform, lr);
        for (param, grad) in model.dtrnn.relation.iter_mut().zip(&grads.dtrnn.relation) {
            sgd_step(param, grad, lr);
        }
        sgd_step(&mut model.dtrnn.bias, &grads.dtrnn.bias, lr);
    }
    if !model.config.freeze_embeddings {
        let matrix = model.dtrnn.embeddings.matrix_mut();
        for (word, grad) in &grads.dtrnn.embedding_columns {
            let mut column = matrix.column_mut(*word);
            for i in 0..grad.len() {
                column[i] -= lr * grad[i];
            }
        }
    }
}

/// Run the whole recipe: initialize, pretrain, seed the softmax variant's
/// output weights from the pretraining head, then train jointly.
pub fn run_training(
    corpus: &Corpus,
    config: &TrainConfig,
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix,
    resources: FeatureResources,
    mut on_pretrain_epoch: impl FnMut(&EpochStats),
    on_joint_epoch: impl FnMut(&EpochStats, &Model),
) -> Result<Model> {
    let mut model = init_model(corpus, config, vocab, embeddings, resources)?;
    let (params, head) = pretrain(
        corpus,
        config,
        &model.vocab,
        std::mem::replace(&mut model.dtrnn, dummy_params()),
        &mut on_pretrain_epoch,
    )?;
    model.dtrnn = params;
    if config.mode == TrainMode::DtrnnSoftmax {
        // The pretraining head becomes the output layer of this variant.
        model.unary.center = head;
    }
    train_joint(corpus, config, model, on_joint_epoch)
}

fn dummy_params() -> DtrnnParams {
    DtrnnParams {
        transform: Array2::zeros((1, 1)),
        relation: Vec::new(),
        bias: Array1::zeros(1),
        embeddings: EmbeddingMatrix::new(Array2::zeros((1, 1))),
    }
}

/// Result of comparing one parameter class against finite differences.
#[derive(Debug, Clone)]
pub struct ClassCheck {
    pub class: String,
    pub max_rel_err: f64,
    pub entries: usize,
}

/// Gradient-check report over every parameter class.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub classes: Vec<ClassCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.classes.iter().all(|c| c.max_rel_err <= tolerance)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .classes
            .iter()
            .map(|c| c.class.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(f, "{:<width$}  {:>12}  {:>8}", "class", "max rel err", "entries")?;
        for check in &self.classes {
            writeln!(
                f,
                "{:<width$}  {:>12.3e}  {:>8}",
                check.class, check.max_rel_err, check.entries
            )?;
        }
        Ok(())
    }
}

/// Relative disagreement with a floor so that noise near zero does not
/// dominate: `|a−b| / max(|a|, |b|, 1e-3)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub(crate) fn class_check(class: impl Into<String>, pairs: &[(f64, f64)]) -> ClassCheck {
    ClassCheck {
        class: class.into(),
        max_rel_err: pairs
            .iter()
            .map(|&(a, b)| relative_error(a, b))
            .fold(0.0, f64::max),
        entries: pairs.len(),
    }
}

/// Randomize the CRF weights of a model (useful before gradient checks;
/// freshly initialized CRF weights are all zero, which makes most gradient
/// paths degenerate).
pub fn randomize_crf_weights(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::Rng;
    for matrix in model.unary.iter_mut() {
        matrix.mapv_inplace(|_| rng.gen_range(-scale..scale));
    }
    if !model.config.mode.transitions_frozen() {
        model
            .transitions
            .matrix
            .mapv_inplace(|_| rng.gen_range(-scale..scale));
    }
}

/// Compare every analytic gradient of the joint objective on `sentence`
/// against central finite differences with step `epsilon`.
pub fn grad_check(model: &Model, sentence: &Sentence, epsilon: f64) -> Result<GradCheckReport> {
    model.validate()?;
    let prep = prepare_sentence(model, sentence)?;
    let analytic = joint_grads(model, &prep);
    let mut model = model.clone();
    let mut classes = Vec::new();

    // Helper: numeric derivative after nudging one coordinate through the
    // closures below.
    macro_rules! fd {
        ($get:expr, $set:expr) => {{
            let old = $get;
            $set(old + epsilon);
            let hi = joint_nll(&model, &prep);
            $set(old - epsilon);
            let lo = joint_nll(&model, &prep);
            $set(old);
            (hi - lo) / (2.0 * epsilon)
        }};
    }

    let d = model.dim();
    {
        let mut pairs = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let numeric = fd!(model.dtrnn.transform[(i, j)], |v| model.dtrnn.transform
                    [(i, j)] = v);
                pairs.push((analytic.dtrnn.transform[(i, j)], numeric));
            }
        }
        classes.push(class_check("W_v", &pairs));
    }
    for r in 0..model.relations.len() {
        let mut pairs = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let numeric =
                    fd!(model.dtrnn.relation[r][(i, j)], |v| model.dtrnn.relation[r]
                        [(i, j)] = v);
                pairs.push((analytic.dtrnn.relation[r][(i, j)], numeric));
            }
        }
        classes.push(class_check(
            format!("W_r[{}]", model.relations.name(r)),
            &pairs,
        ));
    }
    {
        let mut pairs = Vec::with_capacity(d);
        for i in 0..d {
            let numeric = fd!(model.dtrnn.bias[i], |v| model.dtrnn.bias[i] = v);
            pairs.push((analytic.dtrnn.bias[i], numeric));
        }
        classes.push(class_check("b", &pairs));
    }
    {
        let mut pairs = Vec::new();
        let mut words: Vec<usize> = prep.words.clone();
        words.sort_unstable();
        words.dedup();
        let zero = Array1::zeros(d);
        for word in words {
            let grad = analytic.dtrnn.embedding_columns.get(&word).unwrap_or(&zero);
            for i in 0..d {
                let numeric = fd!(model.dtrnn.embeddings.matrix()[(i, word)], |v| {
                    model.dtrnn.embeddings.matrix_mut()[(i, word)] = v
                });
                pairs.push((grad[i], numeric));
            }
        }
        classes.push(class_check("W_e", &pairs));
    }

    let (labels, input_dim) = (model.label_count(), model.input_dim());
    let unary_names: Vec<String> = std::iter::once("W_0".to_string())
        .chain((1..=model.config.window).map(|t| format!("W_-{t}")))
        .chain((1..=model.config.window).map(|t| format!("W_+{t}")))
        .collect();
    for (mi, name) in unary_names.iter().enumerate() {
        let mut pairs = Vec::with_capacity(labels * input_dim);
        for y in 0..labels {
            for j in 0..input_dim {
                let numeric = fd!(
                    *model.unary.iter().nth(mi).unwrap().get((y, j)).unwrap(),
                    |v| *model.unary.iter_mut().nth(mi).unwrap().get_mut((y, j)).unwrap() = v
                );
                pairs.push((
                    *analytic.unary.iter().nth(mi).unwrap().get((y, j)).unwrap(),
                    numeric,
                ));
            }
        }
        classes.push(class_check(name.clone(), &pairs));
    }
    {
        let mut pairs = Vec::with_capacity(labels * labels);
        for y in 0..labels {
            for y2 in 0..labels {
                let numeric = fd!(model.transitions.matrix[(y, y2)], |v| model
                    .transitions
                    .matrix[(y, y2)] = v);
                pairs.push((analytic.transitions[(y, y2)], numeric));
            }
        }
        classes.push(class_check("V", &pairs));
    }

    Ok(GradCheckReport { classes })
}
