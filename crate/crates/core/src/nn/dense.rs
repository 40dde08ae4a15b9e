use serde::{Deserialize, Serialize};

use super::linalg::{add_outer, Matrix};
use crate::rng::DetRng;

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// He uniform, for layers followed by ReLU.
    pub fn he(input: usize, output: usize, rng: &mut DetRng) -> Self {
        let limit = (6.0 / input as f64).sqrt();
        Self {
            weights: Matrix::uniform(output, input, limit, rng),
            bias: vec![0.0; output],
        }
    }

    /// Glorot uniform.
    pub fn glorot(input: usize, output: usize, rng: &mut DetRng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        Self {
            weights: Matrix::uniform(output, input, limit, rng),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weights.matvec_into(x, &mut out, true);
        out
    }

    /// Accumulate parameter gradients for upstream `dy` and input `x` into
    /// `dw` / `db`; add the input gradient into `dx` when given.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        add_outer(dw, dy, x);
        for (b, &d) in db.iter_mut().zip(dy) {
            *b += d;
        }
        if let Some(dx) = dx {
            self.weights.matvec_t_acc(dy, dx);
        }
    }
}
