//! Softmax cross-entropy with the max-subtraction trick.

use super::LearnError;

/// Softmax probabilities of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy loss of a logit vector against a class index, and its
/// gradient `softmax(logits) - onehot(label)`.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), LearnError> {
    if label >= logits.len() {
        return Err(LearnError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(LearnError::NonFinite("logits".into()));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    let loss = m + z.ln() - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_ln_c() {
        let (loss, grad) = softmax_ce(&[0.3, 0.3], 1).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let (loss, _) = softmax_ce(&[30.0, -30.0], 0).unwrap();
        assert!(loss <= 1e-12, "loss {loss}");
        // And the symmetric mistake costs ~60 nats.
        let (bad, _) = softmax_ce(&[30.0, -30.0], 1).unwrap();
        assert_abs_diff_eq!(bad, 60.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::seed::rng_from(17);
        let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = 4;
        let (_, grad) = softmax_ce(&logits, label).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut lp = logits.clone();
            lp[k] += h;
            let (fp, _) = softmax_ce(&lp, label).unwrap();
            lp[k] = logits[k] - h;
            let (fm, _) = softmax_ce(&lp, label).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        assert!(matches!(
            softmax_ce(&[0.0, 0.0], 2),
            Err(LearnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn large_magnitude_logits_stay_finite() {
        let (loss, grad) = softmax_ce(&[1e4, -1e4, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }
}
