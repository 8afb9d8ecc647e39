//! Classification metrics and the accuracy-gated recall used for model selection.

use serde::{Deserialize, Serialize};

use crate::measure::Label;

/// Positive is the "fails the rules" class throughout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Positive, Label::Positive) => self.true_pos += 1,
            (Label::Positive, Label::Negative) => self.false_pos += 1,
            (Label::Negative, Label::Negative) => self.true_neg += 1,
            (Label::Negative, Label::Positive) => self.false_neg += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub recall_prime: f64,
    pub false_neg: usize,
    pub false_pos: usize,
    pub false_critical_ratio: f64,
    pub confusion: Confusion,
    /// Set when there were no positive samples and recall defaulted to 1.
    pub vacuous_recall: bool,
}

/// `recall` if `accuracy >= threshold`, otherwise `-recall`.
pub fn recall_prime(accuracy: f64, recall: f64, threshold: f64) -> f64 {
    if accuracy >= threshold {
        recall
    } else {
        -recall
    }
}

impl Metrics {
    /// `critical` is `(hits, labeled)`: how many samples with labeled
    /// critical rows had a predicted critical set intersecting them.
    pub fn from_confusion(c: Confusion, critical: (usize, usize), acc_threshold: f64) -> Self {
        let total = c.total();
        let accuracy = if total == 0 {
            0.0
        } else {
            (c.true_pos + c.true_neg) as f64 / total as f64
        };
        let positives = c.true_pos + c.false_neg;
        let vacuous_recall = positives == 0;
        let recall = if vacuous_recall {
            log::warn!("no positive samples; recall reported as 1.0");
            1.0
        } else {
            c.true_pos as f64 / positives as f64
        };
        let (hits, labeled) = critical;
        let false_critical_ratio = if labeled == 0 {
            0.0
        } else {
            (labeled - hits) as f64 / labeled as f64
        };
        Self {
            accuracy,
            recall,
            recall_prime: recall_prime(accuracy, recall, acc_threshold),
            false_neg: c.false_neg,
            false_pos: c.false_pos,
            false_critical_ratio,
            confusion: c,
            vacuous_recall,
        }
    }
}

/// Whether two ascending row lists share an element.
pub fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gated_recall_examples() {
        assert_eq!(recall_prime(0.93, 0.7, 0.925), 0.7);
        assert_eq!(recall_prime(0.90, 0.7, 0.925), -0.7);
        assert_eq!(recall_prime(0.925, 0.7, 0.925), 0.7);
    }

    #[test]
    fn perfect_classifier() {
        let c = Confusion {
            true_pos: 3,
            true_neg: 5,
            ..Default::default()
        };
        let m = Metrics::from_confusion(c, (3, 3), 0.925);
        assert_eq!((m.accuracy, m.recall, m.recall_prime), (1.0, 1.0, 1.0));
        assert_eq!(m.false_critical_ratio, 0.0);
    }

    #[test]
    fn vacuous_recall_is_flagged() {
        let c = Confusion {
            true_neg: 4,
            false_pos: 1,
            ..Default::default()
        };
        let m = Metrics::from_confusion(c, (0, 0), 0.5);
        assert!(m.vacuous_recall);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn sorted_intersection() {
        assert!(intersects(&[1, 4, 9], &[2, 9]));
        assert!(!intersects(&[1, 4], &[2, 3, 5]));
        assert!(!intersects(&[], &[1]));
    }
}
