//! Class-weighted cross-entropy and focal loss, each returning the gradient
//! with respect to the logits.

use super::{ClassWeights, ProbDist};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub dlogits: Vec<f64>,
    /// Set when `p[y]` fell below [`PROB_FLOOR`].
    pub clamped: bool,
}

/// `-w[y] * ln p[y]`, gradient `w[y] * (p - onehot(y))`.
pub fn loss_weighted_ce(p: &ProbDist, y: usize, w: &ClassWeights) -> LossOutput {
    let probs = p.as_slice();
    let wy = w.get(y);
    let (py, clamped) = clamp(probs[y]);
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| wy * (pj - if j == y { 1.0 } else { 0.0 }))
        .collect();
    LossOutput {
        loss: -wy * py.ln(),
        dlogits,
        clamped,
    }
}

/// `-w[y] * (1 - p[y])^gamma * ln p[y]`.
///
/// Through the softmax, `d p[y] / d z[j] = p[y] (δ[jy] - p[j])`, so
/// `dL/dz[j] = w[y] * (gamma (1-p[y])^(gamma-1) p[y] ln p[y] - (1-p[y])^gamma) * (δ[jy] - p[j])`.
pub fn loss_focal(p: &ProbDist, y: usize, w: &ClassWeights, gamma: f64) -> LossOutput {
    assert!(gamma >= 0.0, "focal gamma must be non-negative");
    let probs = p.as_slice();
    let wy = w.get(y);
    let raw_py = probs[y];
    let (py, clamped) = clamp(raw_py);
    let log_py = py.ln();
    let one_minus = (1.0 - raw_py).max(0.0);
    let modulator = if gamma == 0.0 { 1.0 } else { one_minus.powf(gamma) };

    // gamma (1-p)^(gamma-1) p ln p vanishes at gamma = 0 and as p -> 1.
    let focus_term = if gamma == 0.0 || one_minus == 0.0 {
        0.0
    } else {
        gamma * one_minus.powf(gamma - 1.0) * raw_py * log_py
    };
    let coeff = wy * (focus_term - modulator);
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| coeff * ((if j == y { 1.0 } else { 0.0 }) - pj))
        .collect();
    LossOutput {
        loss: -wy * modulator * log_py,
        dlogits,
        clamped,
    }
}

fn clamp(p: f64) -> (f64, bool) {
    if p < PROB_FLOOR {
        (PROB_FLOOR, true)
    } else {
        (p, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax;

    fn uniform_weights() -> ClassWeights {
        ClassWeights::new(vec![1.0; 6]).unwrap()
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = ProbDist::new(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let w = ClassWeights::new(vec![3.0; 6]).unwrap();
        let ce = loss_weighted_ce(&p, 2, &w);
        assert_eq!(ce.loss, 0.0);
        assert!(ce.dlogits.iter().all(|&g| g == 0.0));
        let fl = loss_focal(&p, 2, &w, 2.0);
        assert_eq!(fl.loss, 0.0);
        assert!(fl.dlogits.iter().all(|&g| g == 0.0));
        let fl_half = loss_focal(&p, 2, &w, 0.5);
        assert!(fl_half.dlogits.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn uniform_prediction_costs_ln6() {
        let p = ProbDist::uniform(6);
        let out = loss_weighted_ce(&p, 4, &uniform_weights());
        assert!((out.loss - 6f64.ln()).abs() < 1e-15);
        assert!((out.loss - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn zero_probability_is_clamped_and_flagged() {
        let p = ProbDist::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let out = loss_weighted_ce(&p, 3, &uniform_weights());
        assert!(out.clamped);
        assert!((out.loss + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(loss_focal(&p, 3, &uniform_weights(), 2.0).clamped);
    }

    #[test]
    fn focal_down_weights_easy_examples() {
        let p = softmax(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ce = loss_weighted_ce(&p, 0, &uniform_weights()).loss;
        let fl = loss_focal(&p, 0, &uniform_weights(), 2.0).loss;
        assert!(fl < ce * 0.1);
    }
}
