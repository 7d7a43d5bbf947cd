//! Positive-class weighted binary cross-entropy.

use crate::{Error, Result};

/// Probabilities are clamped this far from 0 and 1 before taking logs.
pub const PROB_EPSILON: f64 = 1e-7;

/// `n_neg / n_pos`: the weight that makes `n_pos` positives count as much as the negatives.
pub fn positive_class_weight(n_pos: usize, n_neg: usize) -> Result<f64> {
    if n_pos == 0 {
        return Err(Error::NoPositives("class".into()));
    }
    Ok(n_neg as f64 / n_pos as f64)
}

/// `-[w * t * ln p + (1 - t) * ln(1 - p)]`; the weight only scales the positive term.
pub fn weighted_bce(prob: f64, target: f64, pos_weight: f64) -> f64 {
    let p = prob.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
    -(pos_weight * target * p.ln() + (1.0 - target) * (1.0 - p).ln())
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
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Same loss evaluated from a logit, stable for large |logit|.
pub fn weighted_bce_with_logit(logit: f64, target: f64, pos_weight: f64) -> f64 {
    pos_weight * target * softplus(-logit) + (1.0 - target) * softplus(logit)
}

/// d loss / d logit = `sigmoid(z) * (w t + 1 - t) - w t`.
pub fn weighted_bce_grad_logit(logit: f64, target: f64, pos_weight: f64) -> f64 {
    let wt = pos_weight * target;
    sigmoid(logit) * (wt + 1.0 - target) - wt
}

/// Summed loss over `(prob, target)` pairs sharing one positive weight.
pub fn batch_loss_sum(pairs: &[(f64, f64)], pos_weight: f64) -> f64 {
    pairs
        .iter()
        .map(|&(p, t)| weighted_bce(p, t, pos_weight))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn weight_rule() {
        assert_eq!(positive_class_weight(20, 1000).unwrap(), 50.0);
        assert_eq!(positive_class_weight(500, 500).unwrap(), 1.0);
        assert_eq!(positive_class_weight(3, 10).unwrap(), 10.0 / 3.0);
        assert_eq!(positive_class_weight(5, 9995).unwrap(), 1999.0);
        assert!(positive_class_weight(0, 10).is_err());
    }

    #[test]
    fn bce_values() {
        assert!((weighted_bce(0.5, 1.0, 1.0) - 0.693147).abs() < 1e-6);
        assert!((weighted_bce(0.5, 1.0, 50.0) - 34.657359).abs() < 1e-5);
        assert!((weighted_bce(0.5, 0.0, 50.0) - LN_2).abs() < 1e-12);
        // clamped at the ends
        assert!(weighted_bce(0.0, 1.0, 1.0).is_finite());
        assert!(weighted_bce(1.0, 0.0, 1.0).is_finite());
    }

    #[test]
    fn logit_form_agrees_with_probability_form() {
        for z in [-6.0, -1.0, 0.0, 0.3, 4.0] {
            for t in [0.0, 1.0] {
                for w in [1.0, 7.5] {
                    let a = weighted_bce(sigmoid(z), t, w);
                    let b = weighted_bce_with_logit(z, t, w);
                    assert!((a - b).abs() < 1e-9, "z={z} t={t} w={w}");
                }
            }
        }
    }
}
