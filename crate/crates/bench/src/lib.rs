//! Fixture builders shared by the benchmark targets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rncrf::corpus::{parse_conll, Corpus};
use rncrf::crf::{ScoreTable, TransitionMatrix, UnaryWeights};

/// Random unary score table of shape `n × labels`.
pub fn random_scores(seed: u64, n: usize, labels: usize) -> ScoreTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreTable::new(Array2::from_shape_fn((n, labels), |_| {
        rng.gen_range(-2.0..2.0)
    }))
}

/// Random transition matrix over `labels` labels.
pub fn random_transitions(seed: u64, labels: usize) -> TransitionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TransitionMatrix {
        matrix: Array2::from_shape_fn((labels, labels), |_| rng.gen_range(-2.0..2.0)),
    }
}

/// Random unary weights with window `t` over inputs of dimension `input_dim`.
pub fn random_unary(seed: u64, labels: usize, input_dim: usize, t: usize) -> UnaryWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = UnaryWeights::zeros(labels, input_dim, t);
    for matrix in weights.iter_mut() {
        matrix.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    weights
}

/// Random dense input matrix of shape `dim × n`.
pub fn random_inputs(seed: u64, dim: usize, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((dim, n), |_| rng.gen_range(-1.0..1.0))
}

/// A review-length sentence as a right-branching chain with three relation
/// types, for forward/backward benchmarks.
pub fn chain_corpus(n: usize) -> Corpus {
    let relations = ["nsubj", "dobj", "det"];
    let mut text = String::new();
    for i in 1..=n {
        let head = if i == 1 { 0 } else { i - 1 };
        let label = if i % 5 == 0 { "BA" } else { "O" };
        text.push_str(&format!(
            "{}\tw{}\tNOUN\t{}\t{}\t{}\n",
            i,
            i,
            head,
            relations[i % relations.len()],
            label
        ));
    }
    parse_conll(text.as_bytes()).expect("chain fixture parses")
}
