//! Linear-chain CRF over per-token input vectors.
//!
//! Unary potentials read a context window of `2T+1` input vectors around
//! each position; pairwise potentials are a single transition matrix shared
//! across positions. Inference (partition function, marginals, Viterbi) is
//! exact and runs in log space.

use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2};

/// Windowed unary weight matrices `{W_0, W_{-t}, W_{+t}}`, each `|L| × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryWeights {
    /// Weights applied to the current position.
    pub center: Array2<f64>,
    /// `left[t-1]` is applied to the input `t` positions to the left.
    pub left: Vec<Array2<f64>>,
    /// `right[t-1]` is applied to the input `t` positions to the right.
    pub right: Vec<Array2<f64>>,
}

impl UnaryWeights {
    /// All-zero weights for `labels` labels, `input_dim` input rows and
    /// window parameter `window` (so `2*window + 1` matrices).
    pub fn zeros(labels: usize, input_dim: usize, window: usize) -> Self {
        UnaryWeights {
            center: Array2::zeros((labels, input_dim)),
            left: (0..window).map(|_| Array2::zeros((labels, input_dim))).collect(),
            right: (0..window).map(|_| Array2::zeros((labels, input_dim))).collect(),
        }
    }

    /// Window parameter `T`.
    pub fn window(&self) -> usize {
        debug_assert_eq!(self.left.len(), self.right.len());
        self.left.len()
    }

    /// Number of labels `|L|`.
    pub fn label_count(&self) -> usize {
        self.center.nrows()
    }

    /// Input vector dimension `D`.
    pub fn input_dim(&self) -> usize {
        self.center.ncols()
    }

    /// Iterate all `2T+1` matrices (center, then left `t=1..T`, then right).
    pub fn iter(&self) -> impl Iterator<Item = &Array2<f64>> {
        std::iter::once(&self.center)
            .chain(self.left.iter())
            .chain(self.right.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        std::iter::once(&mut self.center)
            .chain(self.left.iter_mut())
            .chain(self.right.iter_mut())
    }
}

/// Pairwise transition scores; `matrix[(y, y2)]` scores label `y` followed
/// by `y2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub matrix: Array2<f64>,
}

impl TransitionMatrix {
    pub fn zeros(labels: usize) -> Self {
        TransitionMatrix {
            matrix: Array2::zeros((labels, labels)),
        }
    }

    pub fn label_count(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Per-position unary log-potentials, shape `n × |L|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scores: Array2<f64>,
}

impl ScoreTable {
    pub fn new(scores: Array2<f64>) -> Self {
        ScoreTable { scores }
    }

    /// Sequence length `n`.
    pub fn len(&self) -> usize {
        self.scores.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.nrows() == 0
    }

    pub fn label_count(&self) -> usize {
        self.scores.ncols()
    }
}

/// Exact clique marginals and the log partition function.
#[derive(Debug, Clone)]
pub struct Marginals {
    /// `unary[(k, y)] = p(y_k = y)`, shape `n × |L|`.
    pub unary: Array2<f64>,
    /// `pairwise[(k, y, y2)] = p(y_k = y, y_{k+1} = y2)`, shape
    /// `(n-1) × |L| × |L|`.
    pub pairwise: Array3<f64>,
    /// `log Z(h)`.
    pub log_z: f64,
}

/// Gradients of the sentence negative log-likelihood.
#[derive(Debug, Clone)]
pub struct CrfGradients {
    pub nll: f64,
    pub unary: UnaryWeights,
    pub transitions: Array2<f64>,
    /// Gradient with respect to the input vectors, shape `D × n`; every
    /// unary clique whose window covers a position contributes to that
    /// position's column.
    pub inputs: Array2<f64>,
}

/// Windowed unary scores for a sentence given as a `D × n` input matrix.
///
/// Positions outside `1..=n` contribute nothing, so the window sums
/// truncate at the sequence boundaries.
pub fn unary_scores(inputs: &ArrayView2<f64>, weights: &UnaryWeights) -> ScoreTable {
    let n = inputs.ncols();
    assert!(n >= 1, "unary_scores requires at least one position");
    assert_eq!(
        inputs.nrows(),
        weights.input_dim(),
        "input rows must match unary weight columns"
    );

    let mut scores = weights.center.dot(inputs); // |L| × n
    for t in 1..=weights.window() {
        if t >= n {
            break;
        }
        let from_left = weights.left[t - 1].dot(inputs);
        scores
            .slice_mut(s![.., t..])
            .zip_mut_with(&from_left.slice(s![.., ..n - t]), |a, &b| *a += b);
        let from_right = weights.right[t - 1].dot(inputs);
        scores
            .slice_mut(s![.., ..n - t])
            .zip_mut_with(&from_right.slice(s![.., t..]), |a, &b| *a += b);
    }
    ScoreTable::new(scores.t().to_owned())
}

fn log_sum_exp(xs: ArrayView1<f64>) -> f64 {
    let max = xs.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward recursion in log space; row `k` holds
/// `log Σ exp(score of prefixes ending at position k with label y)`.
fn forward_table(scores: &ScoreTable, transitions: &TransitionMatrix) -> Array2<f64> {
    let (n, labels) = (scores.len(), scores.label_count());
    let mut alpha = Array2::<f64>::zeros((n, labels));
    alpha.row_mut(0).assign(&scores.scores.row(0));
    let mut buf = vec![0.0f64; labels];
    for k in 1..n {
        for y in 0..labels {
            for (y_prev, slot) in buf.iter_mut().enumerate() {
                *slot = alpha[(k - 1, y_prev)] + transitions.matrix[(y_prev, y)];
            }
            alpha[(k, y)] = scores.scores[(k, y)] + log_sum_exp(ArrayView1::from(&buf[..]));
        }
    }
    alpha
}

fn backward_table(scores: &ScoreTable, transitions: &TransitionMatrix) -> Array2<f64> {
    let (n, labels) = (scores.len(), scores.label_count());
    let mut beta = Array2::<f64>::zeros((n, labels));
    let mut buf = vec![0.0f64; labels];
    for k in (0..n.saturating_sub(1)).rev() {
        for y in 0..labels {
            for (y_next, slot) in buf.iter_mut().enumerate() {
                *slot = transitions.matrix[(y, y_next)]
                    + scores.scores[(k + 1, y_next)]
                    + beta[(k + 1, y_next)];
            }
            beta[(k, y)] = log_sum_exp(ArrayView1::from(&buf[..]));
        }
    }
    beta
}

/// Log of the partition function `Z`.
pub fn log_partition(scores: &ScoreTable, transitions: &TransitionMatrix) -> f64 {
    assert!(!scores.is_empty());
    let alpha = forward_table(scores, transitions);
    log_sum_exp(alpha.row(alpha.nrows() - 1))
}

/// Exact unary and pairwise marginals via forward-backward.
pub fn marginals(scores: &ScoreTable, transitions: &TransitionMatrix) -> Marginals {
    assert!(!scores.is_empty());
    let (n, labels) = (scores.len(), scores.label_count());
    let alpha = forward_table(scores, transitions);
    let beta = backward_table(scores, transitions);
    let log_z = log_sum_exp(alpha.row(n - 1));

    let mut unary = Array2::<f64>::zeros((n, labels));
    for k in 0..n {
        for y in 0..labels {
            unary[(k, y)] = (alpha[(k, y)] + beta[(k, y)] - log_z).exp();
        }
    }
    let mut pairwise = Array3::<f64>::zeros((n.saturating_sub(1), labels, labels));
    for k in 0..n.saturating_sub(1) {
        for y in 0..labels {
            for y2 in 0..labels {
                pairwise[(k, y, y2)] = (alpha[(k, y)]
                    + transitions.matrix[(y, y2)]
                    + scores.scores[(k + 1, y2)]
                    + beta[(k + 1, y2)]
                    - log_z)
                    .exp();
            }
        }
    }
    Marginals {
        unary,
        pairwise,
        log_z,
    }
}

/// Highest-scoring label sequence.
///
/// Ties resolve to the smallest label index at the latest position where
/// tied sequences differ, which the backtrace realizes by never replacing
/// an equal-scoring candidate.
pub fn viterbi(scores: &ScoreTable, transitions: &TransitionMatrix) -> Vec<usize> {
    assert!(!scores.is_empty());
    let (n, labels) = (scores.len(), scores.label_count());
    let mut delta = scores.scores.row(0).to_owned();
    let mut backptr = Array2::<usize>::zeros((n, labels));

    for k in 1..n {
        let mut next = Array2::<f64>::zeros((1, labels));
        for y in 0..labels {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0;
            for y_prev in 0..labels {
                let cand = delta[y_prev] + transitions.matrix[(y_prev, y)];
                if cand > best {
                    best = cand;
                    best_prev = y_prev;
                }
            }
            next[(0, y)] = best + scores.scores[(k, y)];
            backptr[(k, y)] = best_prev;
        }
        delta = next.row(0).to_owned();
    }

    let mut best_label = 0;
    let mut best = f64::NEG_INFINITY;
    for y in 0..labels {
        if delta[y] > best {
            best = delta[y];
            best_label = y;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = best_label;
    for k in (1..n).rev() {
        path[k - 1] = backptr[(k, path[k])];
    }
    path
}

/// Negative log-likelihood of `gold` and its gradients with respect to the
/// unary weights, the transition matrix and the input vectors.
pub fn nll_and_gradients(
    inputs: &ArrayView2<f64>,
    gold: &[usize],
    weights: &UnaryWeights,
    transitions: &TransitionMatrix,
) -> CrfGradients {
    let n = inputs.ncols();
    let labels = weights.label_count();
    assert_eq!(gold.len(), n, "gold length must match input columns");
    assert!(gold.iter().all(|&y| y < labels), "gold label out of range");

    let scores = unary_scores(inputs, weights);
    let marg = marginals(&scores, transitions);

    let mut gold_score = 0.0;
    for (k, &y) in gold.iter().enumerate() {
        gold_score += scores.scores[(k, y)];
    }
    for k in 0..n.saturating_sub(1) {
        gold_score += transitions.matrix[(gold[k], gold[k + 1])];
    }
    let nll = marg.log_z - gold_score;

    // d(nll)/d(score[k, y]) = p(y_k = y) - 1{gold_k = y}
    let mut dscore = marg.unary.clone();
    for (k, &y) in gold.iter().enumerate() {
        dscore[(k, y)] -= 1.0;
    }

    let mut grad_v = marg.pairwise.sum_axis(ndarray::Axis(0));
    for k in 0..n.saturating_sub(1) {
        grad_v[(gold[k], gold[k + 1])] -= 1.0;
    }

    let window = weights.window();
    let mut grad_unary = UnaryWeights::zeros(labels, weights.input_dim(), window);
    grad_unary.center = dscore.t().dot(&inputs.t()); // |L| × D
    let mut grad_inputs = weights.center.t().dot(&dscore.t()); // D × n
    for t in 1..=window {
        if t >= n {
            break;
        }
        let tail = dscore.slice(s![t.., ..]); // cliques k = t..n
        let head = dscore.slice(s![..n - t, ..]); // cliques k = 0..n-t
        grad_unary.left[t - 1] = tail.t().dot(&inputs.slice(s![.., ..n - t]).t());
        grad_unary.right[t - 1] = head.t().dot(&inputs.slice(s![.., t..]).t());
        let via_left = weights.left[t - 1].t().dot(&tail.t()); // positions 0..n-t
        grad_inputs
            .slice_mut(s![.., ..n - t])
            .zip_mut_with(&via_left, |a, &b| *a += b);
        let via_right = weights.right[t - 1].t().dot(&head.t()); // positions t..n
        grad_inputs
            .slice_mut(s![.., t..])
            .zip_mut_with(&via_right, |a, &b| *a += b);
    }

    CrfGradients {
        nll,
        unary: grad_unary,
        transitions: grad_v,
        inputs: grad_inputs,
    }
}
