//! Tagging new sentences and chunk-level precision/recall/F1.

use crate::corpus::{decode_labels, BioLabel, Sentence, Span};
use crate::crf::{unary_scores, viterbi};
use crate::training::Model;
use crate::Result;
use std::collections::HashSet;
use std::fmt;

/// Scores for one chunk category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryScore {
    pub true_positive: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryScore {
    pub fn from_counts(true_positive: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted > 0 {
            true_positive as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = if gold > 0 {
            true_positive as f64 / gold as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        CategoryScore {
            true_positive,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

/// Chunk-level evaluation over both categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub aspect: CategoryScore,
    pub opinion: CategoryScore,
}

impl EvalReport {
    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (name, score) in [("aspect", &self.aspect), ("opinion", &self.opinion)] {
            out.push((format!("{name}_precision"), format!("{:.4}", score.precision)));
            out.push((format!("{name}_recall"), format!("{:.4}", score.recall)));
            out.push((format!("{name}_f1"), format!("{:.4}", score.f1)));
            out.push((format!("{name}_tp"), score.true_positive.to_string()));
            out.push((format!("{name}_predicted"), score.predicted.to_string()));
            out.push((format!("{name}_gold"), score.gold.to_string()));
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}",
            "category", "precision", "recall", "f1", "tp", "pred", "gold"
        )?;
        for (name, s) in [("ASPECT", &self.aspect), ("OPINION", &self.opinion)] {
            writeln!(
                f,
                "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6}",
                name, s.precision, s.recall, s.f1, s.true_positive, s.predicted, s.gold
            )?;
        }
        Ok(())
    }
}

/// Predict the label sequence of one sentence with the current model.
pub fn tag_labels(model: &Model, sentence: &Sentence) -> Result<Vec<BioLabel>> {
    model.validate()?;
    let prep = crate::training::prepare_sentence(model, sentence)?;
    let (_, inputs) = crate::training::encode_inputs(model, &prep);
    let scores = unary_scores(&inputs.view(), &model.unary);
    let path = viterbi(&scores, &model.transitions);
    Ok(path
        .into_iter()
        .map(|y| model.label_mode.labels()[y])
        .collect())
}

/// Predict the aspect/opinion spans of one sentence.
pub fn tag(model: &Model, sentence: &Sentence) -> Result<Vec<Span>> {
    Ok(decode_labels(&tag_labels(model, sentence)?))
}

/// Exact-match chunk F1: a predicted span counts if and only if its start,
/// end and category all match a gold span of the same sentence.
pub fn chunk_f1(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(crate::error::Error::data(format!(
            "gold has {} sentences, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut tally = [(0usize, 0usize, 0usize); 2]; // (tp, predicted, gold)
    for (gold_spans, pred_spans) in gold.iter().zip(pred) {
        let gold_set: HashSet<&Span> = gold_spans.iter().collect();
        for span in pred_spans {
            let slot = span.category as usize;
            tally[slot].1 += 1;
            if gold_set.contains(span) {
                tally[slot].0 += 1;
            }
        }
        for span in gold_spans {
            tally[span.category as usize].2 += 1;
        }
    }
    Ok(EvalReport {
        aspect: CategoryScore::from_counts(tally[0].0, tally[0].1, tally[0].2),
        opinion: CategoryScore::from_counts(tally[1].0, tally[1].1, tally[1].2),
    })
}
