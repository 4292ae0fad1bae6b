//! Joint aspect/opinion term co-extraction for review text.
//!
//! The model composes a recursive network over each sentence's dependency
//! tree to produce per-token hidden vectors, feeds those vectors (optionally
//! augmented with fixed hand-crafted features) into a linear-chain CRF with
//! windowed unary potentials, and trains the whole stack end-to-end by
//! maximum likelihood with backpropagation through the tree structure.
//!
//! Module map:
//!
//! * [`corpus`] — annotated corpus ingestion, vocabulary, embeddings, BIO codec
//! * [`dtrnn`] — dependency-tree recursive network (forward + structural backprop)
//! * [`crf`] — linear-chain CRF: potentials, exact inference, gradients
//! * [`features`] — POS / name-list / lexicon features appended to hidden vectors
//! * [`training`] — pretraining, joint training, gradient checking, checkpoints
//! * [`eval`] — tagging and chunk-level precision/recall/F1

pub mod corpus;
pub mod crf;
pub mod dtrnn;
pub mod error;
pub mod eval;
pub mod features;
pub mod training;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use corpus::{
    BioLabel, Category, Corpus, CorpusStats, EmbeddingMatrix, LabelMode, Sentence, Span, Token,
    Vocabulary,
};
pub use crf::{Marginals, ScoreTable, TransitionMatrix, UnaryWeights};
pub use dtrnn::{DepTree, DtrnnGradients, DtrnnParams, HiddenStates, RelationTable};
pub use eval::EvalReport;
pub use features::{FeatureConfig, NameLists, SentimentLexicon};
pub use training::{
    EpochStats, FeatureResources, GradCheckReport, Model, TrainConfig, TrainMode,
};
