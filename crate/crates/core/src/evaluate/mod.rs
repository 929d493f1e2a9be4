//! Confusion matrices, classification reports, prediction distributions and
//! validation/test gap diagnostics.
//!
//! Per-class scores follow the zero-division convention: precision, recall
//! and F1 are 0 whenever their denominator is 0. Macro averages always run
//! over all six classes, including classes with no support.

mod ledger;
mod sweep;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassId, NUM_CLASSES};
use crate::error::{Error, Result};

pub use ledger::{experiment_ledger, reference_rows, LedgerRow, Score};
pub use sweep::{ratio_sweep, SweepRow, SweepSetup, SweepTable, REFERENCE_RATIOS};

/// Counts indexed `[gold][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// Gold support per class.
    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    /// Predicted count per class.
    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|j| self.counts.iter().map(|row| row[j]).sum())
    }
}

pub fn confusion_matrix(gold: &[ClassId], pred: &[ClassId]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(pred) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// Confusion matrix from raw integer labels, rejecting values outside 0..=5.
pub fn confusion_matrix_raw(gold: &[i64], pred: &[i64]) -> Result<ConfusionMatrix> {
    let conv = |xs: &[i64]| xs.iter().map(|&v| ClassId::try_from(v)).collect::<Result<Vec<_>>>();
    confusion_matrix(&conv(gold)?, &conv(pred)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: [ClassScores; NUM_CLASSES],
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub accuracy: f64,
    pub total: u64,
    /// Predicted label counts (confusion-matrix column sums).
    pub predicted: [u64; NUM_CLASSES],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(cm: &ConfusionMatrix) -> EvalReport {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let total = cm.total();
    let per_class: [ClassScores; NUM_CLASSES] = std::array::from_fn(|c| {
        let precision = ratio(cm.counts[c][c], cols[c]);
        let recall = ratio(cm.counts[c][c], rows[c]);
        ClassScores {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: rows[c],
        }
    });
    let k = NUM_CLASSES as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|s| s.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|s| s.f1).sum::<f64>() / k,
    };
    let weighted = |f: fn(&ClassScores) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|s| f(s) * s.support as f64).sum::<f64>() / total as f64
        }
    };
    EvalReport {
        per_class,
        macro_avg,
        weighted_avg: Averages {
            precision: weighted(|s| s.precision),
            recall: weighted(|s| s.recall),
            f1: weighted(|s| s.f1),
        },
        accuracy: ratio(cm.trace(), total),
        total,
        predicted: cols,
    }
}

impl EvalReport {
    pub fn macro_f1(&self) -> f64 {
        self.macro_avg.f1
    }

    /// Share of each class among gold labels, in percent.
    pub fn gold_shares(&self) -> [f64; NUM_CLASSES] {
        std::array::from_fn(|c| 100.0 * ratio(self.per_class[c].support, self.total))
    }

    /// Share of each class among predicted labels, in percent.
    pub fn predicted_shares(&self) -> [f64; NUM_CLASSES] {
        std::array::from_fn(|c| 100.0 * ratio(self.predicted[c], self.total))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Markdown with one row per class plus macro and weighted averages,
    /// metrics at four decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Class | Precision | Recall | F1 | Support |\n|---|---:|---:|---:|---:|\n");
        for c in ClassId::all() {
            let s = &self.per_class[c.index()];
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {:.4} | {} |",
                c.display_label(),
                s.precision,
                s.recall,
                s.f1,
                s.support
            );
        }
        for (name, a) in [("Macro average", &self.macro_avg), ("Weighted average", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "| {name} | {:.4} | {:.4} | {:.4} | {} |",
                a.precision, a.recall, a.f1, self.total
            );
        }
        out
    }
}

/// Percentage of each class among predicted labels.
pub fn prediction_distribution(pred: &[ClassId]) -> Result<[f64; NUM_CLASSES]> {
    if pred.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for p in pred {
        counts[p.index()] += 1;
    }
    Ok(counts.map(|n| 100.0 * n as f64 / pred.len() as f64))
}

/// Shares rendered at one decimal place, e.g. `"79.0"`.
pub fn display_shares(shares: &[f64; NUM_CLASSES]) -> [String; NUM_CLASSES] {
    shares.map(|s| format!("{s:.1}"))
}

pub const DEFAULT_TRAP_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub val_macro_f1: f64,
    pub test_macro_f1: f64,
    /// `val_macro_f1 - test_macro_f1`.
    pub gap: f64,
    pub val_predicted_nontoxic: f64,
    pub test_predicted_nontoxic: f64,
    pub test_gold_nontoxic: f64,
    pub margin: f64,
    /// Test predictions over-use class 0 by more than `margin` points.
    pub conservative: bool,
}

/// Compare validation and test reports for the pattern where a model that
/// scores well on validation predicts class 0 too often on a shifted test set.
/// Shares and `margin` are in percentage points.
pub fn trap_report(val: &EvalReport, test: &EvalReport, margin: f64) -> TrapReport {
    let test_pred = test.predicted_shares()[0];
    let test_gold = test.gold_shares()[0];
    TrapReport {
        val_macro_f1: val.macro_f1(),
        test_macro_f1: test.macro_f1(),
        gap: val.macro_f1() - test.macro_f1(),
        val_predicted_nontoxic: val.predicted_shares()[0],
        test_predicted_nontoxic: test_pred,
        test_gold_nontoxic: test_gold,
        margin,
        conservative: test_pred - test_gold > margin,
    }
}

impl TrapReport {
    pub fn to_markdown(&self) -> String {
        format!(
            "| Val F1 | Test F1 | Gap | Val pred. class 0 | Test pred. class 0 | Test gold class 0 | Conservative |\n\
             |---:|---:|---:|---:|---:|---:|:---:|\n\
             | {:.4} | {:.4} | {:.4} | {:.1}% | {:.1}% | {:.1}% | {} |\n",
            self.val_macro_f1,
            self.test_macro_f1,
            self.gap,
            self.val_predicted_nontoxic,
            self.test_predicted_nontoxic,
            self.test_gold_nontoxic,
            if self.conservative { "yes" } else { "no" }
        )
    }
}
