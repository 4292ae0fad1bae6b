//! Hand-crafted feature vectors appended to the hidden representation of
//! each word: one-hot universal POS tags, name-list membership and opinion
//! lexicon membership. All features are binary and stay fixed during
//! training; gradients never flow through them.

use crate::corpus::{BioLabel, Corpus, Sentence};
use crate::error::Error;
use crate::Result;
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

/// The fixed 15-tag universal POS inventory used for the one-hot block.
///
/// Taggers emitting the 17-tag universal scheme are adapted on lookup:
/// `CCONJ`/`SCONJ` fold into `CONJ` and `SYM` into `X`. Any other unknown
/// tag falls back to the `NOUN` slot with a logged warning.
pub const UNIVERSAL_POS_TAGS: [&str; 15] = [
    "ADJ", "ADP", "ADV", "AUX", "CONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "VERB", "X",
];

/// Slot of a POS tag in [`UNIVERSAL_POS_TAGS`].
pub fn pos_slot(tag: &str) -> usize {
    let adapted = match tag {
        "CCONJ" | "SCONJ" => "CONJ",
        "SYM" => "X",
        other => other,
    };
    match UNIVERSAL_POS_TAGS.iter().position(|&t| t == adapted) {
        Some(slot) => slot,
        None => {
            log::warn!("POS tag {tag:?} outside the universal table, mapping to NOUN");
            UNIVERSAL_POS_TAGS
                .iter()
                .position(|&t| t == "NOUN")
                .unwrap()
        }
    }
}

/// Which feature blocks are enabled, plus the name-list thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub pos: bool,
    pub namelist: bool,
    pub lexicon: bool,
    /// Minimum corpus frequency for a full aspect term to enter list A.
    pub min_term_freq: usize,
    /// Minimum empirical aspect probability for a word to enter list B.
    pub min_word_prob: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pos: false,
            namelist: false,
            lexicon: false,
            min_term_freq: 2,
            min_word_prob: 0.7,
        }
    }
}

impl FeatureConfig {
    /// Appended dimension: `15·pos + 2·namelist + 1·lexicon`.
    pub fn dim(&self) -> usize {
        15 * usize::from(self.pos) + 2 * usize::from(self.namelist) + usize::from(self.lexicon)
    }

    /// All three blocks on.
    pub fn all() -> Self {
        FeatureConfig {
            pos: true,
            namelist: true,
            lexicon: true,
            ..FeatureConfig::default()
        }
    }

    /// Set flags from a comma-separated list (`pos,namelist,lexicon`); the
    /// empty string disables everything.
    pub fn set_flags(&mut self, spec: &str) -> Result<()> {
        self.pos = false;
        self.namelist = false;
        self.lexicon = false;
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "pos" => self.pos = true,
                "namelist" => self.namelist = true,
                "lexicon" => self.lexicon = true,
                other => {
                    return Err(Error::data(format!(
                        "unknown feature {other:?} (expected pos, namelist or lexicon)"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Comma-separated form of the enabled flags.
    pub fn flags(&self) -> String {
        let mut parts = Vec::new();
        if self.pos {
            parts.push("pos");
        }
        if self.namelist {
            parts.push("namelist");
        }
        if self.lexicon {
            parts.push("lexicon");
        }
        parts.join(",")
    }

    /// Recover the flag combination from an appended dimension; block sizes
    /// 15/2/1 decompose every legal value uniquely.
    pub fn from_dim(dim: usize) -> Result<Self> {
        let mut config = FeatureConfig::default();
        let mut rest = dim;
        if rest >= 15 {
            config.pos = true;
            rest -= 15;
        }
        if rest >= 2 {
            config.namelist = true;
            rest -= 2;
        }
        if rest >= 1 {
            config.lexicon = true;
            rest -= 1;
        }
        if rest != 0 {
            return Err(Error::dim(format!("{dim} is not a valid feature dimension")));
        }
        Ok(config)
    }
}

/// The two aspect name lists: full high-frequency terms (A) and
/// high-probability single words (B). Entries are lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameLists {
    /// Full aspect-term strings, tokens joined by a single space.
    pub terms: BTreeSet<String>,
    /// Individual words that are usually labeled as aspect tokens.
    pub words: BTreeSet<String>,
}

/// Collection of opinion words, lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentimentLexicon {
    pub words: BTreeSet<String>,
}

impl SentimentLexicon {
    /// One word per line, `#` comments, blank lines ignored.
    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut words = BTreeSet::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            words.insert(trimmed.to_lowercase());
        }
        Ok(SentimentLexicon { words })
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.words.contains(&surface.to_lowercase())
    }
}

/// Extract both name lists from a labeled training corpus.
///
/// List A keeps every full aspect-term string occurring at least
/// `min_term_freq` times. List B keeps every word seen at least twice whose
/// fraction of aspect-labeled occurrences reaches `min_word_prob`.
pub fn extract_name_lists(
    corpus: &Corpus,
    min_term_freq: usize,
    min_word_prob: f64,
) -> Result<NameLists> {
    let mut term_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut word_total: BTreeMap<String, usize> = BTreeMap::new();
    let mut word_aspect: BTreeMap<String, usize> = BTreeMap::new();
    let mut saw_aspect = false;

    for sentence in &corpus.sentences {
        for span in sentence.spans() {
            if span.category != crate::corpus::Category::Aspect {
                continue;
            }
            saw_aspect = true;
            let term = sentence.tokens[span.start - 1..span.end]
                .iter()
                .map(|t| t.surface.to_lowercase())
                .collect::<Vec<_>>()
                .join(" ");
            *term_counts.entry(term).or_insert(0) += 1;
        }
        for token in &sentence.tokens {
            let word = token.surface.to_lowercase();
            *word_total.entry(word.clone()).or_insert(0) += 1;
            if matches!(token.label, BioLabel::Ba | BioLabel::Ia) {
                *word_aspect.entry(word).or_insert(0) += 1;
            }
        }
    }
    if !saw_aspect {
        return Err(Error::data(
            "cannot extract name lists from a corpus without aspect labels",
        ));
    }

    let terms = term_counts
        .into_iter()
        .filter(|(_, count)| *count >= min_term_freq)
        .map(|(term, _)| term)
        .collect();
    let words = word_total
        .into_iter()
        .filter(|(word, total)| {
            *total >= 2 && {
                let aspect = word_aspect.get(word).copied().unwrap_or(0);
                aspect as f64 / *total as f64 >= min_word_prob
            }
        })
        .map(|(word, _)| word)
        .collect();
    Ok(NameLists { terms, words })
}

/// Mark tokens covered by an occurrence of any A-term, greedy longest match
/// left to right over lowercased surfaces.
fn mark_term_occurrences(tokens: &[String], lists: &NameLists) -> Vec<bool> {
    let terms: Vec<Vec<&str>> = lists
        .terms
        .iter()
        .map(|t| t.split(' ').collect())
        .collect();
    let mut covered = vec![false; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let mut best = 0usize;
        for term in &terms {
            if term.len() > best
                && i + term.len() <= tokens.len()
                && term
                    .iter()
                    .zip(&tokens[i..i + term.len()])
                    .all(|(a, b)| *a == b)
            {
                best = term.len();
            }
        }
        if best > 0 {
            for slot in covered.iter_mut().skip(i).take(best) {
                *slot = true;
            }
            i += best;
        } else {
            i += 1;
        }
    }
    covered
}

/// Per-token binary feature vectors, shape `feature_dim × n`.
pub fn featurize(
    sentence: &Sentence,
    lists: Option<&NameLists>,
    lexicon: Option<&SentimentLexicon>,
    config: &FeatureConfig,
) -> Result<Array2<f64>> {
    let n = sentence.len();
    let dim = config.dim();
    let mut out = Array2::<f64>::zeros((dim, n));
    if dim == 0 {
        return Ok(out);
    }

    let lowered: Vec<String> = sentence
        .tokens
        .iter()
        .map(|t| t.surface.to_lowercase())
        .collect();
    let in_term = if config.namelist {
        let lists = lists.ok_or_else(|| {
            Error::data("name-list feature enabled but no name lists provided")
        })?;
        mark_term_occurrences(&lowered, lists)
    } else {
        Vec::new()
    };

    let mut row = 0usize;
    if config.pos {
        for (p, token) in sentence.tokens.iter().enumerate() {
            out[(row + pos_slot(&token.pos), p)] = 1.0;
        }
        row += 15;
    }
    if config.namelist {
        let lists = lists.expect("checked above");
        for (p, word) in lowered.iter().enumerate() {
            if in_term[p] {
                out[(row, p)] = 1.0;
            }
            if lists.words.contains(word) {
                out[(row + 1, p)] = 1.0;
            }
        }
        row += 2;
    }
    if config.lexicon {
        let lexicon = lexicon.ok_or_else(|| {
            Error::data("lexicon feature enabled but no sentiment lexicon provided")
        })?;
        if lexicon.words.is_empty() {
            return Err(Error::data("sentiment lexicon is empty"));
        }
        for (p, word) in lowered.iter().enumerate() {
            if lexicon.words.contains(word) {
                out[(row, p)] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Stack hidden vectors on top of feature vectors into the `D × n` CRF
/// input. With a zero-dimension feature block the result equals `hidden`.
pub fn augment(hidden: &ArrayView2<f64>, features: &ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(
        hidden.ncols(),
        features.ncols(),
        "hidden and feature columns must agree"
    );
    if features.nrows() == 0 {
        return hidden.to_owned();
    }
    concatenate(Axis(0), &[hidden.view(), features.view()]).expect("column counts agree")
}

/// The slice of an input gradient that flows back into the tree network;
/// rows belonging to the fixed feature block are dropped.
pub fn hidden_rows<'a>(input_grad: &'a ArrayView2<'a, f64>, d: usize) -> ArrayView2<'a, f64> {
    input_grad.slice_move(s![..d, ..])
}

/// Serialize name lists as a two-section text file.
pub fn write_name_lists(lists: &NameLists) -> String {
    let mut out = String::from("[A]\n");
    for term in &lists.terms {
        out.push_str(term);
        out.push('\n');
    }
    out.push_str("[B]\n");
    for word in &lists.words {
        out.push_str(word);
        out.push('\n');
    }
    out
}

/// Parse the two-section name-list format (`[A]` / `[B]` headers).
pub fn read_name_lists<R: Read>(reader: R) -> Result<NameLists> {
    let mut lists = NameLists::default();
    let mut section: Option<char> = None;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed {
            "[A]" => section = Some('A'),
            "[B]" => section = Some('B'),
            entry => match section {
                Some('A') => {
                    lists.terms.insert(entry.to_lowercase());
                }
                Some('B') => {
                    lists.words.insert(entry.to_lowercase());
                }
                _ => {
                    return Err(Error::parse(
                        idx + 1,
                        "entry before any [A] or [B] section header",
                    ))
                }
            },
        }
    }
    Ok(lists)
}
