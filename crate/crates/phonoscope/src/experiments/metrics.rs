//! Classification metrics at the 0.5 threshold.

use crate::models::TrainedModel;
use crate::nn::bce_loss;

use super::{Result, StudySample};

/// Accuracy, precision, recall, F1, the confusion counts, and the mean
/// binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub loss: f64,
    /// Set when no positive predictions exist although positives are present;
    /// precision is reported as 0 by convention in that case.
    pub degenerate_precision: bool,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, loss: f64) -> Self {
        let total = (tp + fp + fn_ + tn) as f64;
        let accuracy = (tp + tn) as f64 / total;
        let degenerate = tp + fp == 0 && tp + fn_ > 0;
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            accuracy,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
            loss,
            degenerate_precision: degenerate,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Evaluates a trained model on a test set.
pub fn evaluate(model: &TrainedModel, test: &[&StudySample]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(super::ExperimentError::Parameter("empty test set".into()));
    }
    let mut probs = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for sample in test {
        let p = model.predict_proba(sample.view())?;
        let pred = u8::from(p >= 0.5);
        match (sample.audio.label, pred) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => unreachable!("labels are binary"),
        }
        probs.push(p);
        labels.push(f64::from(sample.audio.label));
    }
    let (loss, _) = bce_loss(&probs, &labels).map_err(crate::models::ModelError::from)?;
    Ok(Metrics::from_counts(tp, fp, fn_, tn, loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_of_ten_each_way() {
        let m = Metrics::from_counts(9, 1, 1, 9, 0.3);
        assert!((m.accuracy - 0.9).abs() < 1e-12);
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.f1 - 0.9).abs() < 1e-12);
        assert_eq!(m.total(), 20);
        assert!(!m.degenerate_precision);
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_counts(5, 0, 0, 5, 0.01);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn no_positive_predictions_is_flagged_degenerate() {
        let m = Metrics::from_counts(0, 0, 4, 6, 0.9);
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate_precision);
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn metrics_recomputed_from_confusion_match() {
        let m = Metrics::from_counts(7, 3, 2, 8, 0.5);
        let accuracy = (m.tp + m.tn) as f64 / m.total() as f64;
        let precision = m.tp as f64 / (m.tp + m.fp) as f64;
        let recall = m.tp as f64 / (m.tp + m.fn_) as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        assert_eq!(m.accuracy, accuracy);
        assert_eq!(m.precision, precision);
        assert_eq!(m.recall, recall);
        assert_eq!(m.f1, f1);
    }
}
