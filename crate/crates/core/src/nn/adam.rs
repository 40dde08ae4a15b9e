use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment estimates for the Adam optimizer, flat over all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update. `grads` is flat over `params` in order.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[f64], lr: f64) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != grads.len() || total != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "adam parameters".into(),
                expected: self.m.len(),
                found: total.max(grads.len()),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for p in params {
            for x in p.iter_mut() {
                let g = grads[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
                i += 1;
            }
        }
        Ok(())
    }
}
