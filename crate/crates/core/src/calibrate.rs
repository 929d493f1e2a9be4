//! Post-hoc probability calibration: temperature scaling over logits, and
//! per-class Platt scaling or isotonic regression over class probabilities
//! followed by renormalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{softmax, ProbDist};

pub const TEMPERATURE_BOUNDS: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;
pub const PLATT_MAX_ITER: usize = 100;
pub const PLATT_TOL: f64 = 1e-8;

/// Mean negative log-likelihood of `softmax(logits / t)`.
pub fn temperature_nll(logits: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            let scaled: Vec<f64> = z.iter().map(|v| v / t).collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - scaled[y]
        })
        .sum();
    total / logits.len() as f64
}

/// Golden-section search for the NLL-minimizing temperature on
/// [`TEMPERATURE_BOUNDS`].
pub fn fit_temperature(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("calibration logits"));
    }
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: labels.len(),
        });
    }
    if let Some((z, &y)) = logits.iter().zip(labels).find(|(z, &y)| y >= z.len()) {
        return Err(Error::InvalidArgument(format!("label {y} outside {} classes", z.len())));
    }
    let f = |t: f64| temperature_nll(logits, labels, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = TEMPERATURE_BOUNDS;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > TEMPERATURE_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok((lo + hi) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn apply(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Total negative log-likelihood of `sigmoid(a*s + b)` against `labels`.
pub fn platt_nll(scores: &[f64], labels: &[bool], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let f = a * s + b;
            softplus(f) - if y { f } else { 0.0 }
        })
        .sum()
}

/// Maximum-likelihood logistic fit by damped Newton iterations.
pub fn fit_platt(scores: &[f64], labels: &[bool]) -> Result<PlattParams> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::InvalidArgument("Platt scaling needs both label values".into()));
    }
    let neg = labels.len() - pos;
    let (mut a, mut b) = (0.0, (pos as f64 / neg as f64).ln());
    let mut nll = platt_nll(scores, labels, a, b);

    for _ in 0..PLATT_MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &y) in scores.iter().zip(labels) {
            let p = sigmoid(a * s + b);
            let r = p - if y { 1.0 } else { 0.0 };
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs().max(gb.abs()) < PLATT_TOL {
            break;
        }
        let ridge = 1e-12;
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };

        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let cand = platt_nll(scores, labels, na, nb);
            if cand <= nll + 1e-4 * step * slope {
                accepted = Some((na, nb, cand));
                break;
            }
            step /= 2.0;
        }
        let Some((na, nb, cand)) = accepted else { break };
        let gain = nll - cand;
        (a, b, nll) = (na, nb, cand);
        if gain < PLATT_TOL * nll.abs().max(1.0) {
            break;
        }
    }
    Ok(PlattParams { a, b })
}

/// Non-decreasing step function fitted by pool-adjacent-violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    /// Distinct observed scores, ascending.
    pub knots: Vec<f64>,
    /// Fitted value at each knot, non-decreasing.
    pub values: Vec<f64>,
}

impl IsotonicFit {
    /// Left-continuous step evaluation: a score between two knots takes the
    /// value of the upper knot; scores outside the range clamp to the ends.
    pub fn eval(&self, score: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k < score);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Least-squares non-decreasing fit of `targets` ordered by `scores`.
/// Tied scores are pooled before fitting.
pub fn fit_isotonic(scores: &[f64], targets: &[f64]) -> Result<IsotonicFit> {
    if scores.is_empty() {
        return Err(Error::Empty("isotonic input"));
    }
    if scores.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: targets.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // (knot, sum, weight) per distinct score.
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for i in order {
        match points.last_mut() {
            Some(last) if last.0 == scores[i] => {
                last.1 += targets[i];
                last.2 += 1.0;
            }
            _ => points.push((scores[i], targets[i], 1.0)),
        }
    }

    // Blocks of (sum, weight, number of knots).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(_, sum, weight) in &points {
        blocks.push((sum, weight, 1));
        while blocks.len() >= 2 {
            let n = blocks.len();
            let (s2, w2, c2) = blocks[n - 1];
            let (s1, w1, c1) = blocks[n - 2];
            if s1 / w1 > s2 / w2 {
                blocks.truncate(n - 2);
                blocks.push((s1 + s2, w1 + w2, c1 + c2));
            } else {
                break;
            }
        }
    }
    let mut values = Vec::with_capacity(points.len());
    for (sum, weight, count) in blocks {
        values.extend(std::iter::repeat_n(sum / weight, count));
    }
    Ok(IsotonicFit {
        knots: points.iter().map(|p| p.0).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Temperature,
    Platt,
    Isotonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibrationParams {
    Temperature { temperature: f64 },
    Platt { per_class: Vec<PlattParams> },
    Isotonic { per_class: Vec<IsotonicFit> },
}

impl CalibrationParams {
    pub fn method(&self) -> CalibrationMethod {
        match self {
            CalibrationParams::Temperature { .. } => CalibrationMethod::Temperature,
            CalibrationParams::Platt { .. } => CalibrationMethod::Platt,
            CalibrationParams::Isotonic { .. } => CalibrationMethod::Isotonic,
        }
    }
}

/// What a calibrator consumes: raw logits (temperature) or per-class scores
/// such as uncalibrated probabilities (Platt, isotonic).
#[derive(Debug, Clone, Copy)]
pub enum CalibrationInput<'a> {
    Logits(&'a [f64]),
    Scores(&'a [f64]),
}

pub fn apply_calibration(input: CalibrationInput<'_>, params: &CalibrationParams) -> Result<ProbDist> {
    match (params, input) {
        (CalibrationParams::Temperature { temperature }, CalibrationInput::Logits(z)) => {
            if !(*temperature > 0.0) {
                return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
            }
            Ok(softmax(&z.iter().map(|v| v / temperature).collect::<Vec<_>>()))
        }
        (CalibrationParams::Platt { per_class }, CalibrationInput::Scores(s)) => {
            check_len(per_class.len(), s.len())?;
            Ok(ProbDist::from_masses(per_class.iter().zip(s).map(|(p, &x)| p.apply(x)).collect()))
        }
        (CalibrationParams::Isotonic { per_class }, CalibrationInput::Scores(s)) => {
            check_len(per_class.len(), s.len())?;
            Ok(ProbDist::from_masses(per_class.iter().zip(s).map(|(f, &x)| f.eval(x)).collect()))
        }
        (p, _) => Err(Error::InvalidArgument(format!(
            "{:?} calibration received the wrong kind of input",
            p.method()
        ))),
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Apply calibration given logits, deriving probabilities where the method
/// needs scores.
pub fn calibrate_logits(logits: &[f64], params: &CalibrationParams) -> Result<ProbDist> {
    match params {
        CalibrationParams::Temperature { .. } => apply_calibration(CalibrationInput::Logits(logits), params),
        _ => {
            let p = softmax(logits);
            apply_calibration(CalibrationInput::Scores(p.as_slice()), params)
        }
    }
}

/// Fit calibration on held-out logits. Platt and isotonic are fitted one
/// class at a time on that class's softmax probability.
pub fn fit_calibration(method: CalibrationMethod, logits: &[Vec<f64>], labels: &[usize]) -> Result<CalibrationParams> {
    if logits.is_empty() {
        return Err(Error::Empty("calibration logits"));
    }
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: labels.len(),
        });
    }
    if method == CalibrationMethod::Temperature {
        return Ok(CalibrationParams::Temperature {
            temperature: fit_temperature(logits, labels)?,
        });
    }
    let k = logits[0].len();
    let probs: Vec<ProbDist> = logits.iter().map(|z| softmax(z)).collect();
    let per_class_scores = |c: usize| probs.iter().map(|p| p.get(c)).collect::<Vec<_>>();
    match method {
        CalibrationMethod::Platt => {
            let per_class = (0..k)
                .map(|c| {
                    let y: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                    fit_platt(&per_class_scores(c), &y)
                        .map_err(|e| Error::InvalidArgument(format!("class {c}: {e}")))
                })
                .collect::<Result<_>>()?;
            Ok(CalibrationParams::Platt { per_class })
        }
        CalibrationMethod::Isotonic => {
            let per_class = (0..k)
                .map(|c| {
                    let y: Vec<f64> = labels.iter().map(|&l| (l == c) as u8 as f64).collect();
                    fit_isotonic(&per_class_scores(c), &y)
                })
                .collect::<Result<_>>()?;
            Ok(CalibrationParams::Isotonic { per_class })
        }
        CalibrationMethod::Temperature => unreachable!(),
    }
}

/// Mean negative log-likelihood of the true labels.
pub fn mean_nll(dists: &[ProbDist], labels: &[usize]) -> f64 {
    let total: f64 = dists
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p.get(y).max(crate::model::loss::PROB_FLOOR).ln())
        .sum();
    total / dists.len().max(1) as f64
}

/// Expected calibration error of the top-class confidence over equal-width
/// bins.
pub fn expected_calibration_error(dists: &[ProbDist], labels: &[usize], bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut conf = vec![0.0; bins];
    let mut acc = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (p, &y) in dists.iter().zip(labels) {
        let c = p.max();
        let b = ((c * bins as f64) as usize).min(bins - 1);
        conf[b] += c;
        acc[b] += (p.argmax() == y) as u8 as f64;
        count[b] += 1;
    }
    let n = dists.len().max(1) as f64;
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (acc[b] - conf[b]).abs() / n)
        .sum()
}
