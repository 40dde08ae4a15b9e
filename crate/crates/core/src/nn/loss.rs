/// Lower clamp applied to the true-class probability before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `(λ/2) Σ ‖W‖²` over the given weight tensors.
pub fn l2_penalty(weights: &[&[f64]], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    0.5 * lambda
        * weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
}

/// Cross-entropy of one sample plus the weight penalty, and the gradient of
/// the cross-entropy with respect to the logits (`p − onehot(label)`).
pub fn xent_loss(probs: &[f64], label: usize, weights: &[&[f64]], lambda: f64) -> (f64, Vec<f64>) {
    let loss = -probs[label].max(PROB_FLOOR).ln() + l2_penalty(weights, lambda);
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    (loss, grad)
}
