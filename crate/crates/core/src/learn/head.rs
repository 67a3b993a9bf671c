//! The classical affine head: a single dense layer from features to logits.

use super::LearnError;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    pub classes: usize,
    pub in_dim: usize,
    /// Row-major `classes x in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of a loss through [`DenseHead::logits`].
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseHead {
    pub fn zeros(classes: usize, in_dim: usize) -> Self {
        Self {
            classes,
            in_dim,
            weight: vec![0.0; classes * in_dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn random<R: Rng>(classes: usize, in_dim: usize, rng: &mut R) -> Self {
        let sd = 1.0 / (in_dim as f64).sqrt();
        let normal = Normal::new(0.0, sd).expect("positive sd");
        let mut head = Self::zeros(classes, in_dim);
        for w in &mut head.weight {
            *w = normal.sample(rng);
        }
        head
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.in_dim {
            return Err(LearnError::DimensionMismatch(format!(
                "head expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        Ok((0..self.classes)
            .map(|c| {
                let row = &self.weight[c * self.in_dim..(c + 1) * self.in_dim];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[c]
            })
            .collect())
    }

    pub fn backward(&self, x: &[f64], grad_logits: &[f64]) -> Result<HeadGrads, LearnError> {
        if grad_logits.len() != self.classes || x.len() != self.in_dim {
            return Err(LearnError::DimensionMismatch(format!(
                "head backward: {} grads for {} classes, {} inputs for {}",
                grad_logits.len(),
                self.classes,
                x.len(),
                self.in_dim
            )));
        }
        let mut gw = vec![0.0; self.weight.len()];
        let mut gx = vec![0.0; self.in_dim];
        for c in 0..self.classes {
            let g = grad_logits[c];
            let row = &self.weight[c * self.in_dim..(c + 1) * self.in_dim];
            for i in 0..self.in_dim {
                gw[c * self.in_dim + i] = g * x[i];
                gx[i] += g * row[i];
            }
        }
        Ok(HeadGrads {
            weight: gw,
            bias: grad_logits.to_vec(),
            input: gx,
        })
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weight);
        out.extend_from_slice(&self.bias);
    }

    /// Load parameters from a flat slice; returns how many were consumed.
    pub fn load_params(&mut self, flat: &[f64]) -> usize {
        let n = self.param_count();
        let nw = self.weight.len();
        self.weight.copy_from_slice(&flat[..nw]);
        self.bias.copy_from_slice(&flat[nw..n]);
        n
    }
}
