use serde::{Deserialize, Serialize};

use crate::nn::linalg::{dot, softmax};
use crate::rng::DetRng;

/// Additive scalar scoring `score_t = w · h_t + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub weight: Vec<f64>,
    /// Single scalar stored as a one-element tensor.
    pub bias: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            weight: vec![0.0; width],
            bias: vec![0.0],
        }
    }

    pub fn glorot(width: usize, rng: &mut DetRng) -> Self {
        let m = crate::nn::Matrix::uniform(1, width, (6.0 / (width + 1) as f64).sqrt(), rng);
        Self {
            weight: m.data,
            bias: vec![0.0],
        }
    }

    pub fn scores(&self, hidden: &[f64]) -> Vec<f64> {
        let width = self.weight.len();
        hidden
            .chunks_exact(width)
            .map(|row| dot(&self.weight, row) + self.bias[0])
            .collect()
    }

    /// Attention weights `softmax(score)`. The bias shifts every score by the
    /// same amount and cancels, so it is left out of the sum to keep that
    /// cancellation exact in floating point.
    pub fn weights(&self, hidden: &[f64]) -> Vec<f64> {
        let width = self.weight.len();
        let raw: Vec<f64> = hidden
            .chunks_exact(width)
            .map(|row| dot(&self.weight, row))
            .collect();
        softmax(&raw)
    }
}

/// Softmax-weighted sum of the rows of `hidden` (`T × width`, row-major).
/// Returns the context vector and the weights.
pub fn attention_pool(params: &AttentionParams, hidden: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let width = params.weight.len();
    let alpha = params.weights(hidden);
    let mut context = vec![0.0; width];
    for (row, &a) in hidden.chunks_exact(width).zip(&alpha) {
        for (c, &h) in context.iter_mut().zip(row) {
            *c += a * h;
        }
    }
    (context, alpha)
}
