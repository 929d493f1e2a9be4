use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// A reported score with its display precision. `approx` marks values only
/// known roughly; they render with a leading `~`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub decimals: usize,
    #[serde(default)]
    pub approx: bool,
}

impl Score {
    pub fn exact(value: f64, decimals: usize) -> Self {
        Score {
            value,
            decimals,
            approx: false,
        }
    }

    pub fn approx(value: f64, decimals: usize) -> Self {
        Score {
            value,
            decimals,
            approx: true,
        }
    }

    /// Full-precision score shown at four decimals.
    pub fn measured(value: f64) -> Self {
        Score::exact(value, 4)
    }

    pub fn render(&self) -> String {
        let tilde = if self.approx { "~" } else { "" };
        format!("{tilde}{:.*}", self.decimals, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub name: String,
    pub val_f1: Option<Score>,
    pub test_f1: Option<Score>,
    #[serde(default)]
    pub notes: String,
}

impl LedgerRow {
    pub fn new(name: impl Into<String>, val_f1: Option<Score>, test_f1: Option<Score>, notes: impl Into<String>) -> Self {
        LedgerRow {
            name: name.into(),
            val_f1,
            test_f1,
            notes: notes.into(),
        }
    }

    /// `val - test` when both are known.
    pub fn gap(&self) -> Option<f64> {
        Some(self.val_f1?.value - self.test_f1?.value)
    }
}

fn cell(s: &Option<Score>, bold: bool) -> String {
    match (s, bold) {
        (None, _) => "--".into(),
        (Some(s), false) => s.render(),
        (Some(s), true) => format!("**{}**", s.render()),
    }
}

/// Markdown table of systems sorted by test F1 ascending (rows without a
/// test score first, ties keep input order). The row with the highest test
/// F1 has its name and test score in bold.
pub fn experiment_ledger(rows: &[LedgerRow]) -> String {
    let mut sorted: Vec<&LedgerRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |r: &LedgerRow| r.test_f1.map(|s| s.value);
        key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)
    });
    let best = sorted
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.test_f1.map(|s| (i, s.value)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv > v => acc,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i);

    let mut out = String::from("| System | Val F1 | Test F1 | Notes |\n|---|---:|---:|---|\n");
    for (i, r) in sorted.iter().enumerate() {
        let bold = best == Some(i);
        let name = if bold { format!("**{}**", r.name) } else { r.name.clone() };
        let _ = writeln!(out, "| {name} | {} | {} | {} |", cell(&r.val_f1, false), cell(&r.test_f1, bold), r.notes);
    }
    out
}

/// Published validation and test macro-F1 of the reference systems.
pub fn reference_rows() -> Vec<LedgerRow> {
    let e = |v, d| Some(Score::exact(v, d));
    let a = |v, d| Some(Score::approx(v, d));
    vec![
        LedgerRow::new("Zero-shot GPT-4o-mini", e(0.4630, 4), e(0.4126, 4), ""),
        LedgerRow::new("Two-stage Gemma 2B", e(0.6749, 4), a(0.47, 2), ""),
        LedgerRow::new("Gemma 2B", e(0.63, 2), a(0.52, 2), ""),
        LedgerRow::new("Gemma 12B", e(0.662, 3), a(0.52, 2), ""),
        LedgerRow::new("Prompted ensemble", e(0.6201, 4), e(0.5762, 4), ""),
        LedgerRow::new("Multi-step ensemble", e(0.6280, 4), e(0.5810, 4), ""),
        LedgerRow::new("Gemma 2B train-all", None, e(0.5898, 4), ""),
        LedgerRow::new("Llama 8B, no synthetic", e(0.6554, 4), e(0.5971, 4), ""),
        LedgerRow::new("Llama 8B + 10% synthetic", a(0.65, 2), e(0.5851, 4), ""),
        LedgerRow::new("Transfer DOTA2 -> GameTox", e(0.6815, 4), a(0.55, 2), ""),
        LedgerRow::new("Llama 8B + 5% synthetic", e(0.6271, 4), e(0.6232, 4), ""),
        LedgerRow::new("Final Class 2 boost", None, e(0.6234, 4), ""),
    ]
}
