//! Vocabulary construction and pretrained embedding ingestion.

use super::Corpus;
use crate::error::Error;
use crate::Result;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

/// Reserved surface for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";

/// Word/index bijection with a reserved unknown entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocabulary {
    /// Rebuild from an ordered word table (checkpoint load path). The table
    /// must contain [`UNK_TOKEN`] and no duplicates.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, word) in words.iter().enumerate() {
            if index.insert(word.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary entry {word:?}")));
            }
        }
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::data("vocabulary table lacks the unknown entry"))?;
        Ok(Vocabulary { words, index, unk })
    }

    /// Number of entries, unknown included.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index reserved for unknown words.
    pub fn unk(&self) -> usize {
        self.unk
    }

    /// Index for a surface form, lowercased before lookup; unknown surfaces
    /// map to the reserved entry.
    pub fn lookup(&self, surface: &str) -> usize {
        let lowered = surface.to_lowercase();
        self.index.get(&lowered).copied().unwrap_or(self.unk)
    }

    /// Exact (already-normalized) membership probe.
    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Word at `index`.
    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    /// Ordered word table for serialization.
    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Collect lowercased surfaces that occur at least `min_count` times.
///
/// The unknown entry sits at index 0 followed by the retained words in
/// lexicographic order, so the result does not depend on sentence order.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for sentence in &corpus.sentences {
        for token in &sentence.tokens {
            *counts.entry(token.surface.to_lowercase()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<String> = counts
        .into_iter()
        .filter(|(word, count)| *count >= min_count && word != UNK_TOKEN)
        .map(|(word, _)| word)
        .collect();
    words.sort_unstable();

    let mut table = Vec::with_capacity(words.len() + 1);
    table.push(UNK_TOKEN.to_string());
    table.extend(words);
    Vocabulary::from_words(table).expect("table built without duplicates")
}

/// Dense word embedding matrix of shape `d × v`; column `j` is the vector of
/// word `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    matrix: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(matrix: Array2<f64>) -> Self {
        EmbeddingMatrix { matrix }
    }

    /// Embedding dimension `d`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Vocabulary size `v`.
    pub fn vocab_size(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column view for word `j`.
    pub fn column(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.matrix.column(j)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }
}

/// Uniform-init bound for learned matrices and out-of-file embedding
/// columns: `sqrt(6) / sqrt(2d + 1)`.
pub fn init_bound(d: usize) -> f64 {
    (6.0f64).sqrt() / ((2 * d + 1) as f64).sqrt()
}

/// Draw uniformly from the open interval `(-bound, bound)`.
pub(crate) fn sample_open<R: Rng>(rng: &mut R, bound: f64) -> f64 {
    loop {
        let x = rng.gen_range(-bound..bound);
        if x > -bound {
            return x;
        }
    }
}

/// Load embeddings from whitespace-separated text.
///
/// The stream may start with a `V d` header line; every other line is
/// `word f1 … fd`. Vectors for words present in `vocab` are copied verbatim;
/// every remaining column (the unknown entry included) is drawn uniformly
/// from the open interval `±sqrt(6)/sqrt(2d+1)` using `seed`, in ascending
/// vocabulary index order, so identical inputs yield identical matrices.
pub fn load_embeddings<R: Read>(
    reader: R,
    vocab: &Vocabulary,
    d: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if d == 0 {
        return Err(Error::dim("embedding dimension must be positive"));
    }
    let reader = BufReader::new(reader);
    let mut matrix = Array2::<f64>::zeros((d, vocab.len()));
    let mut filled = vec![false; vocab.len()];
    let mut first_content_line = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if first_content_line {
            first_content_line = false;
            if fields.len() == 2
                && fields[0].parse::<usize>().is_ok()
                && fields[1].parse::<usize>().is_ok()
            {
                let header_d: usize = fields[1].parse().unwrap();
                if header_d != d {
                    return Err(Error::dim(format!(
                        "embedding file declares dimension {header_d}, expected {d}"
                    )));
                }
                continue;
            }
        }
        if fields.len() != d + 1 {
            return Err(Error::parse(
                line_no,
                format!(
                    "expected a word and {d} values, found {} fields",
                    fields.len()
                ),
            ));
        }
        let word = fields[0];
        let Some(col) = vocab.get(&word.to_lowercase()) else {
            continue;
        };
        for (row, field) in fields[1..].iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                Error::parse(line_no, format!("non-numeric vector entry {field:?}"))
            })?;
            matrix[(row, col)] = value;
        }
        filled[col] = true;
    }

    let bound = init_bound(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for col in 0..vocab.len() {
        if filled[col] {
            continue;
        }
        for row in 0..d {
            matrix[(row, col)] = sample_open(&mut rng, bound);
        }
    }
    Ok(EmbeddingMatrix::new(matrix))
}
