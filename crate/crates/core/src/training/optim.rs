//! Optimizer state and update rules.

use crate::dtrnn::DtrnnParams;
use ndarray::{Array, Array1, Array2, Dimension, Zip};

/// Damping added to the root accumulator in every adaptive step.
pub const ADAGRAD_EPS: f64 = 1e-8;

/// Accumulated squared gradients for everything the pretraining phase
/// updates. Accumulators start at zero and never decrease.
#[derive(Debug, Clone)]
pub struct AdaGradState {
    pub transform: Array2<f64>,
    pub relation: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
    pub embeddings: Array2<f64>,
    pub head: Array2<f64>,
}

impl AdaGradState {
    pub fn new(params: &DtrnnParams, labels: usize) -> Self {
        let d = params.dim();
        AdaGradState {
            transform: Array2::zeros((d, d)),
            relation: params
                .relation
                .iter()
                .map(|m| Array2::zeros(m.dim()))
                .collect(),
            bias: Array1::zeros(d),
            embeddings: Array2::zeros(params.embeddings.matrix().dim()),
            head: Array2::zeros((labels, d)),
        }
    }
}

/// One AdaGrad step: `acc += g²; θ -= lr · g / (√acc + ε)`.
pub fn adagrad_step<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    acc: &mut Array<f64, D>,
    lr: f64,
) {
    Zip::from(param)
        .and(grad)
        .and(acc)
        .for_each(|p, &g, a| {
            *a += g * g;
            *p -= lr * g / (a.sqrt() + ADAGRAD_EPS);
        });
}

/// AdaGrad step touching a single embedding column.
pub fn adagrad_step_column(
    embeddings: &mut Array2<f64>,
    column: usize,
    grad: &Array1<f64>,
    acc: &mut Array2<f64>,
    lr: f64,
) {
    let mut param = embeddings.column_mut(column);
    let mut acc = acc.column_mut(column);
    for i in 0..grad.len() {
        let g = grad[i];
        acc[i] += g * g;
        param[i] -= lr * g / (acc[i].sqrt() + ADAGRAD_EPS);
    }
}

/// Plain gradient step `θ -= lr · g`.
pub fn sgd_step<D: Dimension>(param: &mut Array<f64, D>, grad: &Array<f64, D>, lr: f64) {
    Zip::from(param).and(grad).for_each(|p, &g| *p -= lr * g);
}

/// Decayed joint-phase learning rate `η₀ / (1 + e/κ)` for epoch index `e`.
pub fn decayed_rate(base: f64, epoch: usize, kappa: f64) -> f64 {
    base / (1.0 + epoch as f64 / kappa)
}
