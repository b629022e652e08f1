//! Confusion-matrix based evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::preprocessor::Label;
use crate::stream::LatencyStats;

const N: usize = Label::COUNT;

/// Rows are true labels, columns are predictions.
pub type Confusion = [[u64; N]; N];

pub fn confusion_matrix(actual: &[Label], predicted: &[Label]) -> Confusion {
    let mut m = [[0u64; N]; N];
    for (a, p) in actual.iter().zip(predicted) {
        m[a.code() as usize][p.code() as usize] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Classes with no test items; they count as zero in the macro means.
    pub absent_classes: Vec<Label>,
    pub confusion: Confusion,
    /// Per-prediction latency in milliseconds, when measured.
    pub latency: Option<LatencyStats>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..N).map(|i| confusion[i][i]).sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

        let per_class: Vec<ClassMetrics> = Label::ALL
            .iter()
            .map(|&label| {
                let i = label.code() as usize;
                let tp = confusion[i][i];
                let support: u64 = confusion[i].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    label,
                    support,
                    predicted,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N as f64;

        Self {
            total,
            accuracy: ratio(trace, total),
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            absent_classes: per_class.iter().filter(|c| c.support == 0).map(|c| c.label).collect(),
            per_class,
            confusion,
            latency: None,
        }
    }

    pub fn from_predictions(actual: &[Label], predicted: &[Label]) -> Self {
        Self::from_confusion(confusion_matrix(actual, predicted))
    }

    /// Fraction of `label`'s items predicted as `label`.
    pub fn diagonal_share(&self, label: Label) -> f64 {
        let i = label.code() as usize;
        let row: u64 = self.confusion[i].iter().sum();
        if row == 0 {
            0.0
        } else {
            self.confusion[i][i] as f64 / row as f64
        }
    }

    /// Confusion matrix as CSV with a header row of predicted labels.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for l in Label::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for l in Label::ALL {
            out.push_str(l.name());
            for v in self.confusion[l.code() as usize] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}
