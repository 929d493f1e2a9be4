//! Linear softmax classifier over hashed features.
//!
//! Training is plain mini-batch gradient descent with a cosine or constant
//! learning-rate schedule and L2 decay. The decay is applied lazily through a
//! global weight scale so each step only touches the non-zero feature columns
//! of its batch.

mod io;
pub mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassHistogram, ClassId, Dataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{featurize_all, FeatureConfig, SparseVector};

pub use io::{read_param_blocks, write_param_blocks, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{loss_focal, loss_weighted_ce, LossOutput};

/// Learning rate used by the original LLM fine-tuning runs. Only selected
/// on request (`toxlab train --llm-lr`); far too small for the linear model.
pub const LLM_BASE_LR: f64 = 5e-5;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(format!("probabilities outside [0,1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}")));
        }
        Ok(ProbDist(probs))
    }

    /// Normalize non-negative masses; all-zero input yields uniform.
    pub fn from_masses(masses: Vec<f64>) -> Self {
        let total: f64 = masses.iter().sum();
        if total > 0.0 && total.is_finite() {
            ProbDist(masses.into_iter().map(|m| m / total).collect())
        } else {
            ProbDist::uniform(masses.len())
        }
    }

    pub fn uniform(k: usize) -> Self {
        ProbDist(vec![1.0 / k as f64; k])
    }

    pub fn onehot(k: usize, hot: usize) -> Self {
        let mut v = vec![0.0; k];
        v[hot] = 1.0;
        ProbDist(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> ProbDist {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbDist(exps.into_iter().map(|e| e / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument(format!("class weights must be positive: {w:?}")));
        }
        Ok(ClassWeights(w))
    }

    pub fn uniform(k: usize) -> Self {
        ClassWeights(vec![1.0; k])
    }

    pub fn get(&self, c: usize) -> f64 {
        self.0[c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Balanced weights `N / (K * max(n_c, 1))` for `K = counts.len()` classes.
pub fn class_weights(counts: &[usize]) -> Result<ClassWeights> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("class histogram"));
    }
    let k = counts.len() as f64;
    Ok(ClassWeights(
        counts
            .iter()
            .map(|&n| total as f64 / (k * n.max(1) as f64))
            .collect(),
    ))
}

pub fn class_weights_from_histogram(hist: &ClassHistogram) -> Result<ClassWeights> {
    class_weights(&hist.counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    WeightedCe,
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub loss: LossKind,
    pub focal_gamma: f64,
    pub seed: u64,
    pub l2: f64,
    /// Balanced class weights in the loss; uniform weights when off.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            base_lr: 0.75,
            schedule: Schedule::Cosine,
            batch_size: 16,
            loss: LossKind::WeightedCe,
            focal_gamma: 2.0,
            seed: 42,
            l2: 1e-6,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn with_llm_lr(mut self) -> Self {
        self.base_lr = LLM_BASE_LR;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::Config("focal_gamma must be non-negative".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Learning rate for `step` of `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be positive".into()));
    }
    if step >= total_steps {
        return Err(Error::InvalidArgument(format!("step {step} >= total_steps {total_steps}")));
    }
    Ok(match cfg.schedule {
        Schedule::Constant => cfg.base_lr,
        Schedule::Cosine => {
            let frac = step as f64 / total_steps as f64;
            cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    })
}

/// Dense `n_classes x dims` weights plus per-class biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: usize,
    pub n_classes: usize,
    /// Row-major: class `k` occupies `weights[k*dims .. (k+1)*dims]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dims: usize) -> Self {
        ModelParams {
            dims,
            n_classes,
            weights: vec![0.0; n_classes * dims],
            biases: vec![0.0; n_classes],
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dims..(k + 1) * self.dims]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|x| x.is_finite())
    }

    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dims != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: x.dims,
            });
        }
        Ok((0..self.n_classes)
            .map(|k| {
                let row = self.row(k);
                self.biases[k] + x.iter().map(|(i, v)| row[i] * v).sum::<f64>()
            })
            .collect())
    }
}

/// Softmax of `W x + b`.
pub fn forward(m: &ModelParams, x: &SparseVector) -> Result<ProbDist> {
    Ok(softmax(&m.logits(x)?))
}

/// Per-epoch mean training loss.
pub type History = Vec<f64>;

/// Train a 6-class model on a labelled dataset.
pub fn train(train: &Dataset, cfg: &TrainConfig, fcfg: &FeatureConfig) -> Result<(ModelParams, History)> {
    if train.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let labels: Vec<usize> = train.labels()?.into_iter().map(ClassId::index).collect();
    fcfg.validate()?;
    let features = featurize_all(&train.texts(), fcfg);
    fit(&features, &labels, NUM_CLASSES, cfg)
}

/// Train a `n_classes` model on pre-computed features. Class weights are
/// derived from the label counts when `cfg.class_weighting` is set.
pub fn fit(
    features: &[SparseVector],
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(ModelParams, History)> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(Error::InvalidArgument(format!("label {y} >= {n_classes} classes")));
        }
        counts[y] += 1;
    }
    let weights = if cfg.class_weighting {
        class_weights(&counts)?
    } else {
        ClassWeights::uniform(n_classes)
    };
    fit_weighted(features, labels, n_classes, &weights, cfg)
}

pub fn fit_weighted(
    features: &[SparseVector],
    labels: &[usize],
    n_classes: usize,
    weights: &ClassWeights,
    cfg: &TrainConfig,
) -> Result<(ModelParams, History)> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let dims = features[0].dims;
    if let Some(bad) = features.iter().find(|x| x.dims != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: bad.dims,
        });
    }

    let mut trainer = LazyL2Trainer::new(n_classes, dims);
    let n = features.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    let mut grads: Vec<(usize, Vec<f64>)> = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let lr = lr_at(step, total_steps, cfg)?;
            grads.clear();
            for &i in batch {
                let p = softmax(&trainer.logits(&features[i]));
                let out = match cfg.loss {
                    LossKind::WeightedCe => loss_weighted_ce(&p, labels[i], weights),
                    LossKind::Focal => loss_focal(&p, labels[i], weights, cfg.focal_gamma),
                };
                epoch_loss += out.loss;
                grads.push((i, out.dlogits));
            }
            trainer.apply(features, &grads, lr / batch.len() as f64, lr * cfg.l2);
            step += 1;
        }
        history.push(epoch_loss / n as f64);
    }
    let params = trainer.finish();
    if !params.is_finite() {
        return Err(Error::InvalidArgument("training diverged to non-finite parameters".into()));
    }
    Ok((params, history))
}

/// Parameters stored as `scale * raw` so that L2 decay is a scalar update.
struct LazyL2Trainer {
    raw: ModelParams,
    scale: f64,
}

impl LazyL2Trainer {
    fn new(n_classes: usize, dims: usize) -> Self {
        LazyL2Trainer {
            raw: ModelParams::zeros(n_classes, dims),
            scale: 1.0,
        }
    }

    fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let dims = self.raw.dims;
        (0..self.raw.n_classes)
            .map(|k| {
                let row = &self.raw.weights[k * dims..(k + 1) * dims];
                self.raw.biases[k] + self.scale * x.iter().map(|(i, v)| row[i] * v).sum::<f64>()
            })
            .collect()
    }

    fn apply(&mut self, features: &[SparseVector], grads: &[(usize, Vec<f64>)], step: f64, decay: f64) {
        // Gradients were all taken at the pre-step parameters; decay first,
        // then add the data term expressed in raw units.
        self.scale *= 1.0 - decay;
        if self.scale < 1e-6 {
            self.rescale();
        }
        let dims = self.raw.dims;
        for (i, dlogits) in grads {
            for (k, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut self.raw.weights[k * dims..(k + 1) * dims];
                let coeff = step * g / self.scale;
                for (j, v) in features[*i].iter() {
                    row[j] -= coeff * v;
                }
                self.raw.biases[k] -= step * g;
            }
        }
    }

    fn rescale(&mut self) {
        for w in &mut self.raw.weights {
            *w *= self.scale;
        }
        self.scale = 1.0;
    }

    fn finish(mut self) -> ModelParams {
        self.rescale();
        self.raw
    }
}

/// Class probabilities for each text.
pub fn predict_proba<S: AsRef<str>>(m: &ModelParams, texts: &[S], fcfg: &FeatureConfig) -> Result<Vec<ProbDist>> {
    featurize_all(texts, fcfg)
        .iter()
        .map(|x| forward(m, x))
        .collect()
}

/// Argmax label (ties to the lower class id) with its distribution.
pub fn predict<S: AsRef<str>>(
    m: &ModelParams,
    texts: &[S],
    fcfg: &FeatureConfig,
) -> Result<Vec<(ClassId, ProbDist)>> {
    if m.n_classes != NUM_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "predict needs a {NUM_CLASSES}-class model, got {}",
            m.n_classes
        )));
    }
    Ok(predict_proba(m, texts, fcfg)?
        .into_iter()
        .map(|p| (ClassId::from_index(p.argmax()), p))
        .collect())
}
