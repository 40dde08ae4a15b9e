use super::loss::l2_penalty;
use crate::error::Result;
use crate::rng::DetRng;

/// A differentiable classifier with a fixed, ordered set of parameter
/// tensors. Gradients are flat vectors laid out in tensor order.
pub trait Network: Clone + Send + Sync {
    fn tensors(&self) -> Vec<&[f64]>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// Which tensors carry the L2 penalty (weights yes, biases no).
    fn penalized(&self) -> Vec<bool>;

    /// Forward in train mode when `dropout` is given, infer mode otherwise,
    /// then backpropagate the cross-entropy. Gradients are *added* into
    /// `grad`. Returns the cross-entropy (no penalty) and the probabilities.
    fn accumulate_gradient(
        &self,
        x: &[f64],
        label: usize,
        dropout: Option<&mut DetRng>,
        grad: &mut [f64],
    ) -> Result<(f64, Vec<f64>)>;

    /// Infer-mode class probabilities.
    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn penalty(&self, lambda: f64) -> f64 {
        let weights: Vec<&[f64]> = self
            .tensors()
            .into_iter()
            .zip(self.penalized())
            .filter_map(|(t, p)| p.then_some(t))
            .collect();
        l2_penalty(&weights, lambda)
    }

    /// Add `λ W` to the gradient of every penalized tensor.
    fn add_penalty_gradient(&self, lambda: f64, grad: &mut [f64]) {
        if lambda == 0.0 {
            return;
        }
        let mut offset = 0;
        for (t, p) in self.tensors().into_iter().zip(self.penalized()) {
            if p {
                for (g, &w) in grad[offset..offset + t.len()].iter_mut().zip(t) {
                    *g += lambda * w;
                }
            }
            offset += t.len();
        }
    }

    /// Per-sample objective and its full gradient (cross-entropy + penalty).
    fn objective_and_gradient(
        &self,
        x: &[f64],
        label: usize,
        lambda: f64,
        dropout: Option<&mut DetRng>,
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.param_count()];
        let (xent, _) = self.accumulate_gradient(x, label, dropout, &mut grad)?;
        self.add_penalty_gradient(lambda, &mut grad);
        Ok((xent + self.penalty(lambda), grad))
    }

    fn flat_params(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}
