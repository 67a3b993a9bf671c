//! Adam over a flat parameter vector. Pipelines pack their trainables into
//! one buffer in a documented order and scatter the result back.

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first/second moment accumulators shaped
/// like the trainable set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamHyper,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(hyper: AdamHyper, num_params: usize) -> Self {
        Self {
            hyper,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One biased-moment update with bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), LearnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LearnError::DimensionMismatch(format!(
                "adam state holds {} parameters, got params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamHyper {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut adam = Adam::new(AdamHyper::with_lr(0.1), 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        adam.step(&mut params, &[0.0; 3]).unwrap();
        adam.step(&mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // From a fresh state, m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps) = -lr * sign(g) up to the epsilon correction.
        let lr = 0.05;
        let mut adam = Adam::new(AdamHyper::with_lr(lr), 2);
        let mut params = vec![0.0, 0.0];
        adam.step(&mut params, &[3.0, -0.004]).unwrap();
        assert_abs_diff_eq!(params[0], -lr * 3.0 / (3.0 + 1e-8), epsilon = 1e-15);
        assert_abs_diff_eq!(params[1], lr * 0.004 / (0.004 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn ten_steps_match_scalar_reference() {
        // Independent scalar reimplementation of the recurrence, minimizing
        // f(w) = w^2 from w = 1 at lr = 0.1.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut w_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut trace_ref = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * w_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);
            trace_ref.push(w_ref);
        }

        let mut adam = Adam::new(AdamHyper::with_lr(lr), 1);
        let mut w = vec![1.0f64];
        for step in 0..10 {
            let g = [2.0 * w[0]];
            adam.step(&mut w, &g).unwrap();
            assert_abs_diff_eq!(w[0], trace_ref[step], epsilon = 1e-12);
        }
        assert!(w[0] < 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = Adam::new(AdamHyper::with_lr(0.1), 2);
        let mut params = vec![0.0; 3];
        assert!(adam.step(&mut params, &[0.0; 3]).is_err());
    }
}
