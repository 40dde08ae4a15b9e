use serde::{Deserialize, Serialize};

use super::dense::DenseLayer;
use super::linalg::{dropout_mask, relu, softmax};
use super::loss::xent_loss;
use super::network::Network;
use crate::error::{Error, Result};
use crate::rng::{seeded, DetRng};
use crate::NUM_CLASSES;

/// Layer sizes and dropout of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub dropout_rate: f64,
}

impl MlpArch {
    /// 3800 → 256 → 128 → 64 → 3 with dropout 0.2.
    pub fn default_for(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256, 128, 64],
            output_dim: NUM_CLASSES,
            dropout_rate: 0.2,
        }
    }
}

/// ReLU hidden layers, dropout after each hidden activation, softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub arch: MlpArch,
    pub layers: Vec<DenseLayer>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (after dropout for hidden outputs).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pub pre: Vec<Vec<f64>>,
    pub masks: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl Mlp {
    pub fn new(arch: MlpArch, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut dims = vec![arch.input_dim];
        dims.extend(&arch.hidden);
        dims.push(arch.output_dim);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                if i == last {
                    DenseLayer::glorot(d[0], d[1], &mut rng)
                } else {
                    DenseLayer::he(d[0], d[1], &mut rng)
                }
            })
            .collect();
        Self { arch, layers }
    }

    pub fn zeros(arch: MlpArch) -> Self {
        let mut dims = vec![arch.input_dim];
        dims.extend(&arch.hidden);
        dims.push(arch.output_dim);
        let layers = dims.windows(2).map(|d| DenseLayer::zeros(d[0], d[1])).collect();
        Self { arch, layers }
    }

    /// Forward pass; train mode when `dropout` is given.
    pub fn forward(&self, x: &[f64], mut dropout: Option<&mut DetRng>) -> Result<(Vec<f64>, MlpCache)> {
        if x.len() != self.arch.input_dim {
            return Err(Error::shape(
                format!("{} inputs", self.arch.input_dim),
                format!("{} inputs", x.len()),
            ));
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
            masks: Vec::new(),
            logits: Vec::new(),
        };
        let mut a = x.to_vec();
        let n_hidden = self.layers.len() - 1;
        for layer in &self.layers[..n_hidden] {
            let z = layer.forward(&a);
            let mask = match dropout.as_deref_mut() {
                Some(rng) => dropout_mask(z.len(), self.arch.dropout_rate, rng),
                None => vec![1.0; z.len()],
            };
            let next = z.iter().zip(&mask).map(|(&v, &m)| relu(v) * m).collect();
            cache.inputs.push(std::mem::replace(&mut a, next));
            cache.pre.push(z);
            cache.masks.push(mask);
        }
        let logits = self.layers[n_hidden].forward(&a);
        cache.inputs.push(a);
        let probs = softmax(&logits);
        cache.logits = logits;
        Ok((probs, cache))
    }

    /// Gradient of the cross-entropy given the cached forward pass.
    pub fn backward(&self, cache: &MlpCache, probs: &[f64], label: usize, grad: &mut [f64]) {
        let (_, mut delta) = xent_loss(probs, label, &[], 0.0);
        // gradient buffer offsets, layer by layer: weights then bias
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.data.len() + l.bias.len();
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let nw = layer.weights.data.len();
            let (dw, rest) = grad[offsets[li]..].split_at_mut(nw);
            let db = &mut rest[..layer.bias.len()];
            if li == 0 {
                layer.backward(&cache.inputs[0], &delta, dw, db, None);
                break;
            }
            let mut da = vec![0.0; layer.input_dim()];
            layer.backward(&cache.inputs[li], &delta, dw, db, Some(&mut da));
            let h = li - 1;
            delta = da
                .iter()
                .zip(&cache.masks[h])
                .zip(&cache.pre[h])
                .map(|((&d, &m), &z)| if z > 0.0 { d * m } else { 0.0 })
                .collect();
        }
    }
}

impl Network for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn penalized(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|_| [true, false]).collect()
    }

    fn accumulate_gradient(
        &self,
        x: &[f64],
        label: usize,
        dropout: Option<&mut DetRng>,
        grad: &mut [f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (probs, cache) = self.forward(x, dropout)?;
        let (loss, _) = xent_loss(&probs, label, &[], 0.0);
        self.backward(&cache, &probs, label, grad);
        Ok((loss, probs))
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, None)?.0)
    }
}
