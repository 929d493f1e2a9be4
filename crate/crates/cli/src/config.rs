//! Run configuration: one TOML file, `--set` overrides, then typed flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toxlab_core::augment::AugmentConfig;
use toxlab_core::calibrate::CalibrationMethod;
use toxlab_core::corpus::DEFAULT_TRAIN_FRACTION;
use toxlab_core::evaluate::{DEFAULT_TRAP_MARGIN, REFERENCE_RATIOS};
use toxlab_core::generator::GeneratorSpec;
use toxlab_core::strategies::{BoostConfig, StrategyKind, DEFAULT_OVERSAMPLE_CAP, DEFAULT_TOXIC_THRESHOLD};
use toxlab_core::{FeatureConfig, TrainConfig};

/// Input and artifact locations. Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub val_predictions: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub ledger_rows: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Average,
    Vote,
    Route,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub toxic_threshold: f64,
    pub oversample_cap: usize,
    pub boost: Option<BoostConfig>,
    /// Extra model files combined with `paths.model` at predict time.
    pub ensemble: Vec<PathBuf>,
    pub ensemble_mode: EnsembleMode,
    /// Confidence needed to keep the primary model's label in route mode.
    pub route_tau: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Flat,
            toxic_threshold: DEFAULT_TOXIC_THRESHOLD,
            oversample_cap: DEFAULT_OVERSAMPLE_CAP,
            boost: None,
            ensemble: Vec::new(),
            ensemble_mode: EnsembleMode::Average,
            route_tau: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Remote,
}

/// Where paraphrases come from. The remote provider reads its endpoint and
/// key from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    pub timeout_secs: u64,
    pub max_retries: usize,
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection {
            kind: ProviderKind::Mock,
            timeout_secs: 30,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSection {
    pub method: CalibrationMethod,
    pub ece_bins: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            method: CalibrationMethod::Temperature,
            ece_bins: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    /// Percentage points of class-0 over-prediction tolerated on test.
    pub trap_margin: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            trap_margin: DEFAULT_TRAP_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub ratios: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ratios: REFERENCE_RATIOS.to_vec(),
            workers: 1,
        }
    }
}

/// Corpus generation and splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    pub seed: u64,
    /// Ingest splits its input into train and val.
    pub split: bool,
    pub train_fraction: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            seed: 42,
            split: false,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub strategy: StrategyConfig,
    pub augment: AugmentConfig,
    pub provider: ProviderSection,
    pub calibration: CalibrationSection,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
    pub corpus: CorpusSection,
    pub generator: GeneratorSpec,
}

/// A loaded config plus the keys that were present but not understood.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Parse the right-hand side of `--set`: a TOML literal when it parses as
/// one, otherwise a bare string.
fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

/// Apply `section.key=value` to a TOML tree, creating tables on the way.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .with_context(|| format!("override {spec:?} is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} has an empty segment");
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .with_context(|| format!("override {key:?}: {p:?} is not a table"))?;
    }
    table.insert(last.to_string(), parse_literal(value.trim()));
    Ok(())
}

/// Build the config from an optional file and `--set` overrides. Unknown
/// keys are dropped and reported.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut warnings = Vec::new();
    let config: RunConfig = serde_ignored::deserialize(toml::Value::Table(table), |unknown| {
        warnings.push(format!("unknown config key `{unknown}` ignored"));
    })
    .context("invalid configuration")?;
    Ok(Loaded { config, warnings })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        self.generator.validate()?;
        if let Some(b) = &self.strategy.boost {
            b.validate()?;
        }
        let t = self.strategy.toxic_threshold;
        if !(t > 0.0 && t < 1.0) {
            bail!("strategy.toxic_threshold {t} outside (0,1)");
        }
        let f = self.corpus.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("corpus.train_fraction {f} outside (0,1)");
        }
        Ok(())
    }

    /// Every seed the run depends on, keyed by config path.
    pub fn seeds(&self) -> std::collections::BTreeMap<&'static str, u64> {
        [
            ("train.seed", self.train.seed),
            ("augment.seed", self.augment.seed),
            ("corpus.seed", self.corpus.seed),
        ]
        .into_iter()
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let l = load(None, &[]).unwrap();
        assert_eq!(l.config, RunConfig::default());
        assert!(l.warnings.is_empty());
        assert!(l.config.seeds().values().all(|&s| s == 42));
    }

    #[test]
    fn overrides_create_nested_keys() {
        let l = load(
            None,
            &[
                "train.epochs=3".into(),
                "paths.train=data/train.jsonl".into(),
                "strategy.kind=\"two-stage\"".into(),
                "sweep.ratios=[0.0, 0.05]".into(),
            ],
        )
        .unwrap();
        assert_eq!(l.config.train.epochs, 3);
        assert_eq!(l.config.paths.train.as_deref(), Some(Path::new("data/train.jsonl")));
        assert_eq!(l.config.strategy.kind, StrategyKind::TwoStage);
        assert_eq!(l.config.sweep.ratios, vec![0.0, 0.05]);
    }

    #[test]
    fn unknown_keys_become_warnings() {
        let l = load(None, &["train.epoch=3".into(), "bogus.x=1".into()]).unwrap();
        assert_eq!(l.warnings.len(), 2, "{:?}", l.warnings);
        assert!(l.warnings.iter().any(|w| w.contains("train.epoch")));
        assert_eq!(l.config.train.epochs, TrainConfig::default().epochs);
    }

    #[test]
    fn malformed_override() {
        assert!(load(None, &["novalue".into()]).is_err());
        assert!(load(None, &["a..b=1".into()]).is_err());
        assert!(load(None, &["train.epochs=\"many\"".into()]).is_err());
    }

    #[test]
    fn validation_catches_bad_leakage_pattern() {
        let l = load(None, &["augment.leakage_patterns=[\"(\"]".into()]).unwrap();
        assert!(l.config.validate().is_err());
    }
}
