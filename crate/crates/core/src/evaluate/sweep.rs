use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{classification_report, confusion_matrix};
use crate::augment::{mix_into_train, required_synthetic_count, sample_pool, AugmentConfig, SyntheticCandidate};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::TrainConfig;
use crate::strategies::{StrategyKind, TrainedModel};

pub const REFERENCE_RATIOS: [f64; 7] = [0.0, 0.02, 0.03, 0.05, 0.07, 0.10, 0.15];

/// Everything held fixed across the rows of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
    pub pool: &'a [SyntheticCandidate],
    pub strategy: StrategyKind,
    pub train_cfg: TrainConfig,
    pub features: FeatureConfig,
    pub augment: AugmentConfig,
    pub toxic_threshold: f64,
    pub oversample_cap: usize,
    /// Rows trained concurrently.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub n_synthetic: usize,
    pub feasible: bool,
    pub val_f1: Option<f64>,
    pub test_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn run_row(s: &SweepSetup<'_>, ratio: f64) -> Result<SweepRow> {
    let n = required_synthetic_count(s.train.len(), ratio)?;
    let train = if n == 0 {
        s.train.clone()
    } else {
        match sample_pool(s.pool, n, s.augment.seed) {
            Ok(sel) => mix_into_train(s.train, &sel)?,
            Err(Error::PoolShortfall { .. }) => {
                return Ok(SweepRow {
                    ratio,
                    n_synthetic: n,
                    feasible: false,
                    val_f1: None,
                    test_f1: None,
                })
            }
            Err(e) => return Err(e),
        }
    };
    let model = TrainedModel::fit(s.strategy, &train, &s.train_cfg, &s.features, s.toxic_threshold, s.oversample_cap)?;
    let score = |d: &Dataset| -> Result<f64> {
        let pred: Vec<_> = model.predict(&d.texts())?.into_iter().map(|(c, _)| c).collect();
        Ok(classification_report(&confusion_matrix(&d.labels()?, &pred)?).macro_f1())
    };
    Ok(SweepRow {
        ratio,
        n_synthetic: n,
        feasible: true,
        val_f1: Some(score(s.val)?),
        test_f1: Some(score(s.test)?),
    })
}

/// Train and score one model per synthetic ratio. Rows come back in the
/// order of `ratios` regardless of `workers`; a ratio the pool cannot supply
/// yields an infeasible row instead of an error.
pub fn ratio_sweep(setup: &SweepSetup<'_>, ratios: &[f64]) -> Result<SweepTable> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::InvalidArgument(format!("ratio {r} outside [0,1)")));
    }
    let workers = setup.workers.max(1);
    let mut rows = Vec::with_capacity(ratios.len());
    for chunk in ratios.chunks(workers) {
        let results: Vec<Result<SweepRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|&r| scope.spawn(move || run_row(setup, r))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for r in results {
            rows.push(r?);
        }
    }
    Ok(SweepTable { rows })
}

fn pct(r: f64) -> String {
    let s = format!("{:.1}", r * 100.0);
    format!("{}%", s.strip_suffix(".0").unwrap_or(&s))
}

fn f1_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "--".into(), |x| format!("{x:.4}"))
}

impl SweepTable {
    /// `Synth Ratio | Val F1 | Test F1`, best test row in bold.
    pub fn to_markdown(&self) -> String {
        let best = self
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.test_f1.map(|v| (i, v)))
            .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((i, v)),
            })
            .map(|(i, _)| i);
        let mut out = String::from("| Synth Ratio | Val F1 | Test F1 |\n|---|---:|---:|\n");
        for (i, r) in self.rows.iter().enumerate() {
            if !r.feasible {
                let _ = writeln!(out, "| {} | infeasible | infeasible |", pct(r.ratio));
            } else if best == Some(i) {
                let _ = writeln!(
                    out,
                    "| **{}** | **{}** | **{}** |",
                    pct(r.ratio),
                    f1_cell(r.val_f1),
                    f1_cell(r.test_f1)
                );
            } else {
                let _ = writeln!(out, "| {} | {} | {} |", pct(r.ratio), f1_cell(r.val_f1), f1_cell(r.test_f1));
            }
        }
        out
    }

    /// Tab-separated `ratio, n_synthetic, feasible, val_f1, test_f1`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("ratio\tn_synthetic\tfeasible\tval_f1\ttest_f1\n");
        let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.ratio,
                r.n_synthetic,
                r.feasible,
                num(r.val_f1),
                num(r.test_f1)
            );
        }
        out
    }
}
