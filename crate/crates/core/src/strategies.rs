//! Decision strategies built on the linear model: flat, two-stage
//! (toxic gate then fine-grained head), one-vs-rest with oversampling, and
//! the post-hoc combinators (averaging, voting, confidence routing, class
//! boost).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassId, Dataset, LabeledExample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{featurize_all, FeatureConfig, SparseVector};
use crate::model::{self, fit, forward, read_param_blocks, write_param_blocks, LossKind, ModelParams, ProbDist, TrainConfig};

pub const DEFAULT_OVERSAMPLE_CAP: usize = 500;
pub const DEFAULT_TOXIC_THRESHOLD: f64 = 0.5;

/// Replicate every example of `target` so it appears `floor(min(factor, cap))`
/// times in total. Originals keep their positions; copies are appended in
/// round order with ids suffixed `#os<k>`.
pub fn oversample(d: &Dataset, target: ClassId, factor: f64, cap: usize) -> Result<Dataset> {
    if !(factor >= 1.0) {
        return Err(Error::InvalidArgument(format!("oversampling factor {factor} < 1")));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("oversampling cap must be >= 1".into()));
    }
    let reps = factor.min(cap as f64).floor() as usize;
    let positives: Vec<&LabeledExample> = d.iter().filter(|e| e.label == Some(target)).collect();
    let mut examples = d.examples.clone();
    examples.reserve(positives.len() * (reps - 1));
    for k in 1..reps {
        for e in &positives {
            let mut copy = (*e).clone();
            copy.id = format!("{}#os{k}", e.id);
            examples.push(copy);
        }
    }
    Ok(Dataset::new(d.name.clone(), examples))
}

/// Replication factor that brings `positives` up to roughly `negatives`,
/// bounded by `cap` and never below 1.
pub fn balancing_factor(positives: usize, negatives: usize, cap: usize) -> usize {
    if positives == 0 {
        return 1;
    }
    (negatives / positives).min(cap).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageModel {
    /// Two classes: 0 = non-toxic, 1 = toxic.
    pub binary: ModelParams,
    /// Five classes: index `i` is class `i + 1`.
    pub fine: ModelParams,
    pub toxic_threshold: f64,
}

impl TwoStageModel {
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        self.toxic_threshold = threshold;
        Ok(self)
    }

    pub fn p_toxic(&self, x: &SparseVector) -> Result<f64> {
        Ok(forward(&self.binary, x)?.get(1))
    }

    /// Label by the gate rule: non-toxic below the threshold, otherwise the
    /// fine head's argmax.
    pub fn label(&self, x: &SparseVector) -> Result<ClassId> {
        if self.p_toxic(x)? < self.toxic_threshold {
            return Ok(ClassId::NON_TOXIC);
        }
        Ok(ClassId::from_index(forward(&self.fine, x)?.argmax() + 1))
    }

    /// Composite distribution `(1 - t, t * fine_1, ..., t * fine_5)`.
    pub fn dist(&self, x: &SparseVector) -> Result<ProbDist> {
        let t = self.p_toxic(x)?;
        let fine = forward(&self.fine, x)?;
        let mut masses = Vec::with_capacity(NUM_CLASSES);
        masses.push(1.0 - t);
        masses.extend(fine.as_slice().iter().map(|f| t * f));
        Ok(ProbDist::from_masses(masses))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("toxic threshold {t} must lie in (0,1)")))
    }
}

pub fn train_two_stage(train: &Dataset, cfg: &TrainConfig, fcfg: &FeatureConfig) -> Result<TwoStageModel> {
    fcfg.validate()?;
    let labels = train.labels()?;
    let features = featurize_all(&train.texts(), fcfg);
    if !labels.iter().any(|c| c.is_toxic()) {
        return Err(Error::InvalidArgument("two-stage training needs at least one toxic example".into()));
    }
    if labels.iter().all(|c| c.is_toxic()) {
        return Err(Error::InvalidArgument("two-stage training needs at least one non-toxic example".into()));
    }
    let gate: Vec<usize> = labels.iter().map(|c| c.is_toxic() as usize).collect();
    let (binary, _) = fit(&features, &gate, 2, cfg)?;

    let (fine_x, fine_y): (Vec<SparseVector>, Vec<usize>) = features
        .into_iter()
        .zip(&labels)
        .filter(|(_, c)| c.is_toxic())
        .map(|(x, c)| (x, c.index() - 1))
        .unzip();
    let (fine, _) = fit(&fine_x, &fine_y, NUM_CLASSES - 1, cfg)?;
    Ok(TwoStageModel {
        binary,
        fine,
        toxic_threshold: DEFAULT_TOXIC_THRESHOLD,
    })
}

pub fn predict_two_stage<S: AsRef<str>>(m: &TwoStageModel, texts: &[S], fcfg: &FeatureConfig) -> Result<Vec<ClassId>> {
    featurize_all(texts, fcfg).iter().map(|x| m.label(x)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvrModel {
    /// One binary head per class; index 1 of each head is "positive".
    pub heads: Vec<ModelParams>,
    pub oversample_cap: usize,
    /// Training counts per class, used to break score ties.
    pub class_frequency: [usize; NUM_CLASSES],
    /// Replication factor applied to each head's positives.
    pub replication: [usize; NUM_CLASSES],
}

impl OvrModel {
    pub fn scores(&self, x: &SparseVector) -> Result<[f64; NUM_CLASSES]> {
        let mut out = [0.0; NUM_CLASSES];
        for (o, head) in out.iter_mut().zip(&self.heads) {
            *o = forward(head, x)?.get(1);
        }
        Ok(out)
    }

    /// Argmax over head scores; ties go to the more frequent training class.
    pub fn label_from_scores(&self, scores: &[f64; NUM_CLASSES]) -> ClassId {
        let mut best = self.tie_order()[0];
        for c in self.tie_order() {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        ClassId::from_index(best)
    }

    fn tie_order(&self) -> [usize; NUM_CLASSES] {
        let mut order = [0, 1, 2, 3, 4, 5];
        order.sort_by(|&a, &b| self.class_frequency[b].cmp(&self.class_frequency[a]).then(a.cmp(&b)));
        order
    }

    pub fn dist(&self, x: &SparseVector) -> Result<ProbDist> {
        Ok(ProbDist::from_masses(self.scores(x)?.to_vec()))
    }
}

/// One binary head per class; positives are replicated up to the negative
/// count (capped at `cap`) and every head uses focal loss.
pub fn train_ovr(train: &Dataset, cfg: &TrainConfig, fcfg: &FeatureConfig, cap: usize) -> Result<OvrModel> {
    if cap == 0 {
        return Err(Error::InvalidArgument("oversampling cap must be >= 1".into()));
    }
    fcfg.validate()?;
    let labels = train.labels()?;
    let mut freq = [0usize; NUM_CLASSES];
    for c in &labels {
        freq[c.index()] += 1;
    }
    let missing: Vec<u8> = ClassId::all().filter(|c| freq[c.index()] == 0).map(ClassId::value).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let features = featurize_all(&train.texts(), fcfg);
    let head_cfg = TrainConfig {
        loss: LossKind::Focal,
        ..cfg.clone()
    };

    let mut heads = Vec::with_capacity(NUM_CLASSES);
    let mut replication = [1usize; NUM_CLASSES];
    for c in ClassId::all() {
        let pos = freq[c.index()];
        let factor = balancing_factor(pos, labels.len() - pos, cap);
        replication[c.index()] = factor;

        let mut xs: Vec<SparseVector> = features.clone();
        let mut ys: Vec<usize> = labels.iter().map(|l| (*l == c) as usize).collect();
        for _ in 1..factor {
            for (x, l) in features.iter().zip(&labels) {
                if *l == c {
                    xs.push(x.clone());
                    ys.push(1);
                }
            }
        }
        let (head, _) = fit(&xs, &ys, 2, &head_cfg)?;
        heads.push(head);
    }
    Ok(OvrModel {
        heads,
        oversample_cap: cap,
        class_frequency: freq,
        replication,
    })
}

pub fn predict_ovr<S: AsRef<str>>(m: &OvrModel, texts: &[S], fcfg: &FeatureConfig) -> Result<Vec<ClassId>> {
    featurize_all(texts, fcfg)
        .iter()
        .map(|x| Ok(m.label_from_scores(&m.scores(x)?)))
        .collect()
}

/// Per-class arithmetic mean of the inputs.
pub fn ensemble_average(dists: &[ProbDist]) -> Result<ProbDist> {
    let first = dists.first().ok_or(Error::Empty("ensemble inputs"))?;
    let k = first.len();
    if let Some(bad) = dists.iter().find(|d| d.len() != k) {
        return Err(Error::LengthMismatch {
            left: k,
            right: bad.len(),
        });
    }
    let n = dists.len() as f64;
    let mean: Vec<f64> = (0..k)
        .map(|c| dists.iter().map(|d| d.get(c)).sum::<f64>() / n)
        .collect();
    Ok(ProbDist::from_masses(mean))
}

/// Majority vote. A tie between the leading labels goes to whichever of them
/// `fallback` rates highest (then the lower id); no votes defers to
/// `fallback` entirely.
pub fn ensemble_vote(labels: &[ClassId], fallback: &ProbDist) -> ClassId {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    if top == 0 {
        return ClassId::from_index(fallback.argmax());
    }
    let tied: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] == top).collect();
    let mut best = tied[0];
    for &c in &tied[1..] {
        if fallback.get(c) > fallback.get(best) {
            best = c;
        }
    }
    ClassId::from_index(best)
}

/// Use `primary` when it is at least `tau` confident, otherwise `secondary`.
pub fn confidence_route(primary: &ProbDist, secondary: &ProbDist, tau: f64) -> ClassId {
    if primary.max() >= tau {
        ClassId::from_index(primary.argmax())
    } else {
        ClassId::from_index(secondary.argmax())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub class: ClassId,
    pub factor: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            class: ClassId::OTHER_OFFENSIVE,
            factor: 1.0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor > 0.0 && self.factor.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("boost factor must be positive, got {}", self.factor)))
        }
    }
}

/// Scale one class's probability by `factor` and renormalize.
pub fn apply_class_boost(p: &ProbDist, b: &BoostConfig) -> ProbDist {
    let mut masses = p.as_slice().to_vec();
    masses[b.class.index()] *= b.factor;
    ProbDist::from_masses(masses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Flat,
    TwoStage,
    Ovr,
}

/// A trained model of any strategy, bundled with the feature settings it was
/// trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub model: StrategyModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyModel {
    Flat(ModelParams),
    TwoStage(TwoStageModel),
    Ovr(OvrModel),
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    strategy: StrategyKind,
    features: FeatureConfig,
    train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    toxic_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oversample_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_frequency: Option<[usize; NUM_CLASSES]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replication: Option<[usize; NUM_CLASSES]>,
}

impl TrainedModel {
    pub fn fit(
        kind: StrategyKind,
        data: &Dataset,
        cfg: &TrainConfig,
        fcfg: &FeatureConfig,
        two_stage_threshold: f64,
        oversample_cap: usize,
    ) -> Result<Self> {
        let model = match kind {
            StrategyKind::Flat => StrategyModel::Flat(model::train(data, cfg, fcfg)?.0),
            StrategyKind::TwoStage => {
                StrategyModel::TwoStage(train_two_stage(data, cfg, fcfg)?.with_threshold(two_stage_threshold)?)
            }
            StrategyKind::Ovr => StrategyModel::Ovr(train_ovr(data, cfg, fcfg, oversample_cap)?),
        };
        Ok(TrainedModel {
            features: fcfg.clone(),
            train: cfg.clone(),
            model,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self.model {
            StrategyModel::Flat(_) => StrategyKind::Flat,
            StrategyModel::TwoStage(_) => StrategyKind::TwoStage,
            StrategyModel::Ovr(_) => StrategyKind::Ovr,
        }
    }

    /// Strategy-native labels plus a six-class distribution per text.
    pub fn predict<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<(ClassId, ProbDist)>> {
        featurize_all(texts, &self.features)
            .iter()
            .map(|x| match &self.model {
                StrategyModel::Flat(m) => {
                    let p = forward(m, x)?;
                    Ok((ClassId::from_index(p.argmax()), p))
                }
                StrategyModel::TwoStage(m) => Ok((m.label(x)?, m.dist(x)?)),
                StrategyModel::Ovr(m) => {
                    let scores = m.scores(x)?;
                    Ok((m.label_from_scores(&scores), ProbDist::from_masses(scores.to_vec())))
                }
            })
            .collect()
    }

    /// Raw logits of the flat model; `None` for other strategies.
    pub fn flat_logits<S: AsRef<str>>(&self, texts: &[S]) -> Option<Result<Vec<Vec<f64>>>> {
        match &self.model {
            StrategyModel::Flat(m) => Some(featurize_all(texts, &self.features).iter().map(|x| m.logits(x)).collect()),
            _ => None,
        }
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        let mut meta = ModelMeta {
            strategy: self.kind(),
            features: self.features.clone(),
            train: self.train.clone(),
            toxic_threshold: None,
            oversample_cap: None,
            class_frequency: None,
            replication: None,
        };
        let blocks: Vec<&ModelParams> = match &self.model {
            StrategyModel::Flat(m) => vec![m],
            StrategyModel::TwoStage(m) => {
                meta.toxic_threshold = Some(m.toxic_threshold);
                vec![&m.binary, &m.fine]
            }
            StrategyModel::Ovr(m) => {
                meta.oversample_cap = Some(m.oversample_cap);
                meta.class_frequency = Some(m.class_frequency);
                meta.replication = Some(m.replication);
                m.heads.iter().collect()
            }
        };
        write_param_blocks(sink, &serde_json::to_value(&meta)?, &blocks)
    }

    pub fn load<R: Read>(src: R) -> Result<Self> {
        let (meta, blocks) = read_param_blocks(src)?;
        let meta: ModelMeta = serde_json::from_value(meta)?;
        let bad = |what: &str| Error::ModelFormat(format!("{what} for {:?} model", meta.strategy));
        let mut blocks = blocks.into_iter();
        let model = match meta.strategy {
            StrategyKind::Flat => StrategyModel::Flat(blocks.next().ok_or_else(|| bad("missing block"))?),
            StrategyKind::TwoStage => {
                let binary = blocks.next().ok_or_else(|| bad("missing gate block"))?;
                let fine = blocks.next().ok_or_else(|| bad("missing fine block"))?;
                StrategyModel::TwoStage(TwoStageModel {
                    binary,
                    fine,
                    toxic_threshold: meta.toxic_threshold.ok_or_else(|| bad("missing threshold"))?,
                })
            }
            StrategyKind::Ovr => StrategyModel::Ovr(OvrModel {
                heads: blocks.by_ref().collect(),
                oversample_cap: meta.oversample_cap.ok_or_else(|| bad("missing cap"))?,
                class_frequency: meta.class_frequency.ok_or_else(|| bad("missing class frequency"))?,
                replication: meta.replication.ok_or_else(|| bad("missing replication"))?,
            }),
        };
        if blocks.next().is_some() {
            return Err(bad("unexpected extra block"));
        }
        Ok(TrainedModel {
            features: meta.features,
            train: meta.train,
            model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, normalize_text};
    use crate::model::softmax;
    use proptest::prelude::*;

    fn fcfg() -> FeatureConfig {
        FeatureConfig {
            dims: 1 << 12,
            ..FeatureConfig::default()
        }
    }

    fn ex(id: &str, text: &str, label: usize) -> LabeledExample {
        LabeledExample::new(id, text, ClassId::from_index(label))
    }

    fn six_class_toy() -> Dataset {
        let words = ["gg wp push", "noob bot trash", "wtf damn crap", "your kind out", "find you hurt", "purge inferior"];
        let mut out = Vec::new();
        for (c, w) in words.iter().enumerate() {
            let n = [30, 12, 6, 4, 3, 2][c];
            for i in 0..n {
                out.push(ex(&format!("{c}-{i}"), &format!("{w} {i}"), c));
            }
        }
        Dataset::new("toy", out)
    }

    #[test]
    fn oversample_identity_and_cap() {
        let d = six_class_toy();
        assert_eq!(oversample(&d, ClassId::EXTREMISM, 1.0, 500).unwrap(), d);

        let extremism: Vec<_> = (0..24).map(|i| ex(&format!("e{i}"), &format!("purge {i}"), 5)).collect();
        let big = Dataset::new("x", extremism);
        let out = oversample(&big, ClassId::EXTREMISM, 500.0, 500).unwrap();
        assert_eq!(out.len(), 12_000);
        assert_eq!(out.examples[24].id, "e0#os1");

        let capped = oversample(&big, ClassId::EXTREMISM, 900.0, 500).unwrap();
        assert_eq!(capped, out);
        assert!(oversample(&big, ClassId::EXTREMISM, 0.5, 500).is_err());
    }

    #[test]
    fn oversample_keeps_distinct_texts() {
        let d = six_class_toy();
        let out = oversample(&d, ClassId::THREATS, 7.5, 500).unwrap();
        let before: std::collections::BTreeSet<_> = d.iter().map(|e| &e.text).collect();
        let after: std::collections::BTreeSet<_> = out.iter().map(|e| &e.text).collect();
        assert_eq!(before, after);
        assert_eq!(out.len(), d.len() + 3 * 6);
    }

    #[test]
    fn balancing_factor_examples() {
        assert_eq!(balancing_factor(60, 42_899, 500), 500);
        assert_eq!(balancing_factor(60, 42_899, 500), (42_899 / 60).min(500));
        assert_eq!(balancing_factor(50, 50, 500), 1);
        assert_eq!(balancing_factor(80, 20, 500), 1);
        assert_eq!(balancing_factor(279, 42_680, 500), 152);
    }

    #[test]
    fn two_stage_single_fine_class() {
        let mut ex_ = Vec::new();
        for i in 0..20 {
            ex_.push(ex(&format!("n{i}"), &format!("gg wp {i}"), 0));
        }
        for i in 0..8 {
            ex_.push(ex(&format!("t{i}"), &format!("find you hurt {i}"), 4));
        }
        let m = train_two_stage(&Dataset::new("d", ex_), &TrainConfig::default(), &fcfg()).unwrap();
        for t in ["gg", "hurt you", "random words", "find"] {
            let x = extract_features(&normalize_text(t), &fcfg());
            assert_eq!(forward(&m.fine, &x).unwrap().argmax() + 1, 4);
        }
        let m = m.with_threshold(1e-9).unwrap();
        let labels = predict_two_stage(&m, &["gg wp", "hello"], &fcfg()).unwrap();
        assert!(labels.iter().all(|&l| l == ClassId::THREATS));
    }

    #[test]
    fn two_stage_errors_without_toxic() {
        let d = Dataset::new("d", vec![ex("a", "gg", 0), ex("b", "wp", 0)]);
        assert!(train_two_stage(&d, &TrainConfig::default(), &fcfg()).is_err());
        let d = Dataset::new("d", vec![ex("a", "noob", 1)]);
        assert!(train_two_stage(&d, &TrainConfig::default(), &fcfg()).is_err());
    }

    #[test]
    fn two_stage_threshold_limits_and_composition() {
        let d = six_class_toy();
        let m = train_two_stage(&d, &TrainConfig::default(), &fcfg()).unwrap();
        let texts: Vec<&str> = d.iter().map(|e| e.text.as_str()).collect();

        let strict = m.clone().with_threshold(1.0 - 1e-12).unwrap();
        let labels = predict_two_stage(&strict, &texts, &fcfg()).unwrap();
        assert!(labels.iter().all(|&l| l == ClassId::NON_TOXIC));

        let lax = m.clone().with_threshold(1e-12).unwrap();
        let labels = predict_two_stage(&lax, &texts, &fcfg()).unwrap();
        assert!(labels.iter().all(|&l| l != ClassId::NON_TOXIC));

        assert!(m.clone().with_threshold(0.0).is_err());
        assert!(m.clone().with_threshold(1.0).is_err());

        // Manual composition of the two heads.
        let composite = predict_two_stage(&m, &texts, &fcfg()).unwrap();
        for (t, got) in texts.iter().zip(composite) {
            let x = extract_features(&normalize_text(t), &fcfg());
            let gate = softmax(&m.binary.logits(&x).unwrap());
            let fine = softmax(&m.fine.logits(&x).unwrap());
            let want = if gate.get(1) < m.toxic_threshold { 0 } else { fine.argmax() + 1 };
            assert_eq!(got.index(), want);
            if gate.get(1) >= m.toxic_threshold {
                assert_ne!(got, ClassId::NON_TOXIC);
            }
        }
    }

    #[test]
    fn ovr_requires_every_class() {
        let d = Dataset::new("d", vec![ex("a", "gg", 0), ex("b", "noob", 1)]);
        match train_ovr(&d, &TrainConfig::default(), &fcfg(), 500) {
            Err(Error::MissingClasses(c)) => assert_eq!(c, vec![2, 3, 4, 5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ovr_replication_and_prediction() {
        let d = six_class_toy();
        let m = train_ovr(&d, &TrainConfig::default(), &fcfg(), 500).unwrap();
        assert_eq!(m.replication, [1, 3, 8, 13, 18, 27]);
        let texts: Vec<&str> = d.iter().map(|e| e.text.as_str()).collect();
        let labels = predict_ovr(&m, &texts, &fcfg()).unwrap();
        let correct = labels.iter().zip(&d.examples).filter(|(l, e)| Some(**l) == e.label).count();
        assert!(correct as f64 / d.len() as f64 > 0.9);

        // Brute-force per-text max over heads.
        for (t, got) in texts.iter().zip(&labels) {
            let x = extract_features(&normalize_text(t), &fcfg());
            let scores: Vec<f64> = m.heads.iter().map(|h| softmax(&h.logits(&x).unwrap()).get(1)).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(scores[got.index()], max);
        }
    }

    #[test]
    fn ovr_tie_break_prefers_frequent_class() {
        let m = OvrModel {
            heads: Vec::new(),
            oversample_cap: 500,
            class_frequency: [100, 50, 20, 5, 2, 1],
            replication: [1; 6],
        };
        assert_eq!(m.label_from_scores(&[0.5; 6]), ClassId::NON_TOXIC);
        assert_eq!(m.label_from_scores(&[0.1, 0.2, 0.9, 0.1, 0.1, 0.1]), ClassId::OTHER_OFFENSIVE);
        let skewed = OvrModel {
            class_frequency: [1, 2, 3, 40, 5, 6],
            ..m
        };
        assert_eq!(skewed.label_from_scores(&[0.5; 6]), ClassId::HATE);
    }

    #[test]
    fn averaging_examples() {
        let a = ProbDist::onehot(6, 0);
        let b = ProbDist::onehot(6, 1);
        let avg = ensemble_average(&[a.clone(), b]).unwrap();
        assert_eq!(avg.as_slice(), &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let p = softmax(&[0.1, 0.4, -1.0, 2.0, 0.0, 0.3]);
        let same = ensemble_average(&[p.clone(), p.clone(), p.clone()]).unwrap();
        for (x, y) in same.as_slice().iter().zip(p.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(ensemble_average(&[]).is_err());
        assert!(ensemble_average(&[a, ProbDist::uniform(2)]).is_err());
    }

    #[test]
    fn voting_examples() {
        let flat = ProbDist::uniform(6);
        let l = ClassId::from_index;
        assert_eq!(ensemble_vote(&[l(1), l(1), l(2)], &flat), l(1));
        let peaked = ProbDist::new(vec![0.1, 0.1, 0.6, 0.1, 0.05, 0.05]).unwrap();
        assert_eq!(ensemble_vote(&[l(1), l(2)], &peaked), l(2));
        let elsewhere = ProbDist::onehot(6, 5);
        assert_eq!(ensemble_vote(&[l(3), l(3), l(3)], &elsewhere), l(3));
        assert_eq!(ensemble_vote(&[], &elsewhere), l(5));
    }

    #[test]
    fn routing_examples() {
        let primary = ProbDist::new(vec![0.55, 0.45, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let secondary = ProbDist::onehot(6, 3);
        assert_eq!(confidence_route(&primary, &secondary, 0.0), ClassId::NON_TOXIC);
        assert_eq!(confidence_route(&primary, &secondary, 1.0), ClassId::HATE);
        assert_eq!(confidence_route(&primary, &secondary, 0.6), ClassId::HATE);
        assert_eq!(confidence_route(&ProbDist::onehot(6, 2), &secondary, 1.0), ClassId::OTHER_OFFENSIVE);
    }

    #[test]
    fn boost_examples() {
        let p = ProbDist::new(vec![0.5, 0.0, 0.4, 0.05, 0.05, 0.0]).unwrap();
        let b = BoostConfig {
            class: ClassId::OTHER_OFFENSIVE,
            factor: 1.5,
        };
        assert_eq!(p.argmax(), 0);
        let boosted = apply_class_boost(&p, &b);
        assert_eq!(boosted.argmax(), 2);
        assert!((boosted.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let id = apply_class_boost(&p, &BoostConfig::default());
        for (x, y) in id.as_slice().iter().zip(p.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(BoostConfig { factor: 0.0, ..b }.validate().is_err());
    }

    #[test]
    fn trained_model_round_trip() {
        let d = six_class_toy();
        for kind in [StrategyKind::Flat, StrategyKind::TwoStage, StrategyKind::Ovr] {
            let m = TrainedModel::fit(kind, &d, &TrainConfig::default(), &fcfg(), 0.5, 500).unwrap();
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            let back = TrainedModel::load(buf.as_slice()).unwrap();
            assert_eq!(back, m);
            let mut buf2 = Vec::new();
            back.save(&mut buf2).unwrap();
            assert_eq!(buf, buf2);
            let preds = back.predict(&["gg wp push", "purge inferior"]).unwrap();
            assert_eq!(preds.len(), 2);
        }
    }

    fn dist_strategy() -> impl Strategy<Value = ProbDist> {
        proptest::collection::vec(0.0f64..1.0, 6).prop_map(ProbDist::from_masses)
    }

    proptest! {
        #[test]
        fn average_is_permutation_invariant(ds in proptest::collection::vec(dist_strategy(), 1..6), rot in 0usize..6) {
            let mut rotated = ds.clone();
            let r = rot % rotated.len();
            rotated.rotate_left(r);
            rotated.reverse();
            let a = ensemble_average(&ds).unwrap();
            let b = ensemble_average(&rotated).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn boost_preserves_order_of_other_classes(p in dist_strategy(), class in 0usize..6, factor in 0.01f64..50.0) {
            let b = BoostConfig { class: ClassId::from_index(class), factor };
            let q = apply_class_boost(&p, &b);
            prop_assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in (0..6).filter(|&i| i != class) {
                for j in (0..6).filter(|&j| j != class) {
                    if p.get(i) < p.get(j) {
                        prop_assert!(q.get(i) <= q.get(j));
                    }
                }
            }
        }
    }
}
