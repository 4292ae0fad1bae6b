//! Annotated review corpora: tokens, BIO labels, spans, vocabulary and
//! pretrained embeddings.
//!
//! A corpus file carries one token per line with tab-separated columns
//! `INDEX SURFACE POS HEAD RELATION LABEL`, sentences separated by blank
//! lines, `#` starting a comment line. Heads are 1-based token indices with
//! `0` marking the syntactic root.

mod conll;
mod vocab;

pub use conll::{parse_conll, rewrite_labels, write_conll};
pub use vocab::{build_vocab, init_bound, load_embeddings, EmbeddingMatrix, Vocabulary, UNK_TOKEN};

pub(crate) use vocab::sample_open;

use crate::error::Error;
use crate::Result;
use std::fmt;
use std::str::FromStr;

/// Per-token BIO tag over aspect and opinion chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioLabel {
    /// Beginning of an aspect term.
    Ba,
    /// Inside an aspect term.
    Ia,
    /// Beginning of an opinion term.
    Bo,
    /// Inside an opinion term.
    Io,
    /// Outside any term.
    O,
}

impl BioLabel {
    /// Canonical surface form used in corpus files.
    pub fn as_str(&self) -> &'static str {
        match self {
            BioLabel::Ba => "BA",
            BioLabel::Ia => "IA",
            BioLabel::Bo => "BO",
            BioLabel::Io => "IO",
            BioLabel::O => "O",
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BioLabel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "BA" => Ok(BioLabel::Ba),
            "IA" => Ok(BioLabel::Ia),
            "BO" => Ok(BioLabel::Bo),
            "IO" => Ok(BioLabel::Io),
            "O" => Ok(BioLabel::O),
            _ => Err(()),
        }
    }
}

/// Active label inventory.
///
/// The full mode tags both aspect and opinion chunks; the aspect-only mode
/// collapses opinion chunks to `O` and works over `{BA, IA, O}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// `{BA, IA, BO, IO, O}`
    Full,
    /// `{BA, IA, O}`
    AspectOnly,
}

impl LabelMode {
    /// Labels of this mode in their fixed index order.
    pub fn labels(&self) -> &'static [BioLabel] {
        match self {
            LabelMode::Full => &[
                BioLabel::Ba,
                BioLabel::Ia,
                BioLabel::Bo,
                BioLabel::Io,
                BioLabel::O,
            ],
            LabelMode::AspectOnly => &[BioLabel::Ba, BioLabel::Ia, BioLabel::O],
        }
    }

    /// Number of labels (`|L|`).
    pub fn len(&self) -> usize {
        self.labels().len()
    }

    /// True when `label` belongs to this mode's inventory.
    pub fn contains(&self, label: BioLabel) -> bool {
        self.labels().contains(&label)
    }

    /// Index of `label` within this mode, if present.
    pub fn index_of(&self, label: BioLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    /// Project a full-mode label into this mode (opinion tags become `O` in
    /// aspect-only mode).
    pub fn project(&self, label: BioLabel) -> BioLabel {
        match (self, label) {
            (LabelMode::AspectOnly, BioLabel::Bo | BioLabel::Io) => BioLabel::O,
            _ => label,
        }
    }

    /// Reconstruct a mode from an ordered label-string table, as stored in a
    /// checkpoint header.
    pub fn from_label_table(table: &[String]) -> Result<LabelMode> {
        for mode in [LabelMode::Full, LabelMode::AspectOnly] {
            let want: Vec<&str> = mode.labels().iter().map(|l| l.as_str()).collect();
            if table.len() == want.len() && table.iter().zip(&want).all(|(a, b)| a == b) {
                return Ok(mode);
            }
        }
        Err(Error::Checkpoint(format!(
            "unrecognized label table {table:?}"
        )))
    }
}

/// Chunk category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Aspect,
    Opinion,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Aspect => f.write_str("ASPECT"),
            Category::Opinion => f.write_str("OPINION"),
        }
    }
}

/// A contiguous aspect or opinion term.
///
/// `start` and `end` are 1-based inclusive token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub category: Category,
}

impl Span {
    pub fn new(start: usize, end: usize, category: Category) -> Self {
        Span {
            start,
            end,
            category,
        }
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// One token of an annotated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    /// Original surface form.
    pub surface: String,
    /// Universal POS tag string.
    pub pos: String,
    /// 1-based head index; 0 marks the syntactic root.
    pub head: usize,
    /// Dependency relation label to the head.
    pub relation: String,
    /// Gold (or predicted) BIO label.
    pub label: BioLabel,
}

/// An annotated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Token count.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold spans decoded from the token labels.
    pub fn spans(&self) -> Vec<Span> {
        decode_labels(&self.labels())
    }

    /// The label sequence of this sentence.
    pub fn labels(&self) -> Vec<BioLabel> {
        self.tokens.iter().map(|t| t.label).collect()
    }
}

/// A set of sentences sharing one label mode.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    /// Inferred from the labels present: [`LabelMode::Full`] as soon as any
    /// opinion tag occurs, [`LabelMode::AspectOnly`] otherwise.
    pub mode: LabelMode,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Summary counts over a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub aspect_spans: usize,
    pub opinion_spans: usize,
    pub mode: LabelMode,
}

/// Count sentences, tokens and gold chunks per category.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats {
        sentences: corpus.sentences.len(),
        tokens: 0,
        aspect_spans: 0,
        opinion_spans: 0,
        mode: corpus.mode,
    };
    for sentence in &corpus.sentences {
        stats.tokens += sentence.len();
        for span in sentence.spans() {
            match span.category {
                Category::Aspect => stats.aspect_spans += 1,
                Category::Opinion => stats.opinion_spans += 1,
            }
        }
    }
    stats
}

/// Encode non-overlapping spans as a BIO sequence of length `n`.
///
/// The first token of a span gets the B-tag of its category, the rest the
/// I-tag, and everything else `O`. In aspect-only mode opinion spans map to
/// all-`O`.
pub fn encode_labels(spans: &[Span], n: usize, mode: LabelMode) -> Result<Vec<BioLabel>> {
    for span in spans {
        if span.start < 1 || span.end < span.start || span.end > n {
            return Err(Error::data(format!(
                "span [{},{}] out of bounds for sentence of length {n}",
                span.start, span.end
            )));
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::data(format!(
                    "overlapping spans [{},{}] and [{},{}]",
                    a.start, a.end, b.start, b.end
                )));
            }
        }
    }

    let mut labels = vec![BioLabel::O; n];
    for span in spans {
        if mode == LabelMode::AspectOnly && span.category == Category::Opinion {
            continue;
        }
        let (begin, inside) = match span.category {
            Category::Aspect => (BioLabel::Ba, BioLabel::Ia),
            Category::Opinion => (BioLabel::Bo, BioLabel::Io),
        };
        labels[span.start - 1] = begin;
        for pos in span.start..span.end {
            labels[pos] = inside;
        }
    }
    Ok(labels)
}

/// Decode a BIO sequence into spans.
///
/// Accepts invalid sequences: an I-tag whose predecessor is not a B- or
/// I-tag of the same category is treated as a fresh B-tag.
pub fn decode_labels(labels: &[BioLabel]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, Category)> = None;

    for (idx, &label) in labels.iter().enumerate() {
        let pos = idx + 1;
        let (starts, continues) = match label {
            BioLabel::Ba => (Some(Category::Aspect), None),
            BioLabel::Ia => (None, Some(Category::Aspect)),
            BioLabel::Bo => (Some(Category::Opinion), None),
            BioLabel::Io => (None, Some(Category::Opinion)),
            BioLabel::O => (None, None),
        };

        match (starts, continues) {
            (Some(cat), _) => {
                if let Some((start, open_cat)) = open.take() {
                    spans.push(Span::new(start, pos - 1, open_cat));
                }
                open = Some((pos, cat));
            }
            (None, Some(cat)) => match open {
                Some((_, open_cat)) if open_cat == cat => {}
                _ => {
                    // Orphan I-tag: promote to a span start.
                    if let Some((start, open_cat)) = open.take() {
                        spans.push(Span::new(start, pos - 1, open_cat));
                    }
                    open = Some((pos, cat));
                }
            },
            (None, None) => {
                if let Some((start, open_cat)) = open.take() {
                    spans.push(Span::new(start, pos - 1, open_cat));
                }
            }
        }
    }
    if let Some((start, cat)) = open {
        spans.push(Span::new(start, labels.len(), cat));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aspect(start: usize, end: usize) -> Span {
        Span::new(start, end, Category::Aspect)
    }

    fn opinion(start: usize, end: usize) -> Span {
        Span::new(start, end, Category::Opinion)
    }

    #[test]
    fn encode_basic_aspect() {
        let labels = encode_labels(&[aspect(3, 4)], 5, LabelMode::Full).unwrap();
        assert_eq!(
            labels,
            vec![
                BioLabel::O,
                BioLabel::O,
                BioLabel::Ba,
                BioLabel::Ia,
                BioLabel::O
            ]
        );
    }

    #[test]
    fn encode_opinion_at_start() {
        let labels = encode_labels(&[opinion(1, 1)], 3, LabelMode::Full).unwrap();
        assert_eq!(labels, vec![BioLabel::Bo, BioLabel::O, BioLabel::O]);
    }

    #[test]
    fn encode_opinion_dropped_in_aspect_only_mode() {
        let labels = encode_labels(&[opinion(1, 1)], 3, LabelMode::AspectOnly).unwrap();
        assert_eq!(labels, vec![BioLabel::O; 3]);
    }

    #[test]
    fn encode_rejects_overlap() {
        assert!(encode_labels(&[aspect(1, 2), opinion(2, 3)], 4, LabelMode::Full).is_err());
    }

    #[test]
    fn encode_rejects_out_of_bounds() {
        assert!(encode_labels(&[aspect(3, 5)], 4, LabelMode::Full).is_err());
        assert!(encode_labels(&[aspect(0, 1)], 4, LabelMode::Full).is_err());
    }

    #[test]
    fn decode_basic() {
        let spans = decode_labels(&[BioLabel::Ba, BioLabel::Ia, BioLabel::O, BioLabel::Bo]);
        assert_eq!(spans, vec![aspect(1, 2), opinion(4, 4)]);
    }

    #[test]
    fn decode_repairs_orphan_inside_tag() {
        let spans = decode_labels(&[BioLabel::O, BioLabel::Ia, BioLabel::O]);
        assert_eq!(spans, vec![aspect(2, 2)]);
    }

    #[test]
    fn decode_category_switch_breaks_chunk() {
        // IA after BO starts a new aspect chunk.
        let spans = decode_labels(&[BioLabel::Bo, BioLabel::Ia]);
        assert_eq!(spans, vec![opinion(1, 1), aspect(2, 2)]);
    }

    #[test]
    fn decode_all_outside() {
        assert!(decode_labels(&[BioLabel::O; 4]).is_empty());
    }

    #[test]
    fn decode_back_to_back_begins() {
        let spans = decode_labels(&[BioLabel::Ba, BioLabel::Ba]);
        assert_eq!(spans, vec![aspect(1, 1), aspect(2, 2)]);
    }

    #[test]
    fn stats_count_spans_per_category() {
        let text = "1\tI\tPRON\t2\tnsubj\tO\n\
                    2\tlike\tVERB\t0\troot\tBO\n\
                    3\tthe\tDET\t4\tdet\tO\n\
                    4\tfood\tNOUN\t2\tdobj\tBA\n";
        let corpus = parse_conll(text.as_bytes()).unwrap();
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.sentences, 1);
        assert_eq!(stats.tokens, 4);
        assert_eq!(stats.aspect_spans, 1);
        assert_eq!(stats.opinion_spans, 1);
        assert_eq!(stats.mode, LabelMode::Full);
    }

    #[test]
    fn stats_empty_corpus() {
        let corpus = parse_conll(&b""[..]).unwrap();
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.sentences, 0);
        assert_eq!(stats.tokens, 0);
        assert_eq!(stats.aspect_spans, 0);
        assert_eq!(stats.opinion_spans, 0);
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        /// Random non-overlapping span sets over sentences of length 1..=12.
        fn span_sets() -> impl Strategy<Value = (usize, Vec<Span>)> {
            (1usize..=12).prop_flat_map(|n| {
                let cuts = proptest::collection::vec(any::<bool>(), n);
                let cats = proptest::collection::vec(any::<(bool, bool)>(), n);
                (Just(n), cuts, cats).prop_map(|(n, cuts, cats)| {
                    // Walk positions, opening a span on (used, _) and extending
                    // while the cut bit stays false.
                    let mut spans = Vec::new();
                    let mut pos = 1;
                    while pos <= n {
                        let (used, is_opinion) = cats[pos - 1];
                        if !used {
                            pos += 1;
                            continue;
                        }
                        let start = pos;
                        let mut end = pos;
                        while end < n && !cuts[end - 1] && cats[end].0 {
                            end += 1;
                        }
                        let category = if is_opinion {
                            Category::Opinion
                        } else {
                            Category::Aspect
                        };
                        spans.push(Span::new(start, end, category));
                        pos = end + 2; // leave a gap so chunks stay separable
                    }
                    (n, spans)
                })
            })
        }

        proptest! {
            #[test]
            fn encode_decode_round_trip((n, spans) in span_sets()) {
                let labels = encode_labels(&spans, n, LabelMode::Full).unwrap();
                prop_assert_eq!(labels.len(), n);
                let decoded = decode_labels(&labels);
                prop_assert_eq!(decoded, spans);
            }

            #[test]
            fn encode_respects_mode((n, spans) in span_sets()) {
                let labels = encode_labels(&spans, n, LabelMode::AspectOnly).unwrap();
                prop_assert_eq!(labels.len(), n);
                for label in labels {
                    prop_assert!(LabelMode::AspectOnly.contains(label));
                }
            }
        }
    }
}
