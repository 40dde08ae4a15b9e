use serde::{Deserialize, Serialize};

use super::attention::AttentionParams;
use super::cell::{GruCellParams, StepCache};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::nn::linalg::{dropout_mask, softmax};
use crate::nn::{train, xent_loss, DenseLayer, History, Network, TrainConfig};
use crate::rng::{seeded, DetRng};
use crate::{argmax, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiGruArch {
    /// Channels per time step.
    pub input_dim: usize,
    /// Units per direction.
    pub hidden: usize,
    pub dropout_rate: f64,
}

impl Default for BiGruArch {
    fn default() -> Self {
        Self {
            input_dim: 19,
            hidden: 128,
            dropout_rate: 0.2,
        }
    }
}

/// Forward and backward GRU cells sharing dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiGruParams {
    pub forward: GruCellParams,
    pub backward: GruCellParams,
}

/// Per-time-step caches of both directions.
#[derive(Debug, Clone)]
pub struct BiGruTrace {
    pub forward: Vec<StepCache>,
    /// Indexed by time step, not processing order.
    pub backward: Vec<StepCache>,
}

impl BiGruParams {
    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// Run both directions from zero states. Returns the `T × 2H` hidden
    /// matrix (row `t` = `[forward_t, backward_t]`) and the step caches.
    pub fn run(&self, sequence: &[f64]) -> Result<(Vec<f64>, BiGruTrace)> {
        let d = self.input_dim();
        if sequence.is_empty() || !sequence.len().is_multiple_of(d) {
            return Err(Error::shape(
                format!("T x {d} sequence"),
                format!("{} values", sequence.len()),
            ));
        }
        let t_len = sequence.len() / d;
        let h = self.hidden_dim();
        let x = |t: usize| &sequence[t * d..(t + 1) * d];

        let mut fwd = Vec::with_capacity(t_len);
        let mut state = vec![0.0; h];
        for t in 0..t_len {
            let c = self.forward.step(&state, x(t));
            state.clone_from(&c.h);
            fwd.push(c);
        }
        let mut bwd = Vec::with_capacity(t_len);
        state.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..t_len).rev() {
            let c = self.backward.step(&state, x(t));
            state.clone_from(&c.h);
            bwd.push(c);
        }
        bwd.reverse();

        let mut hidden = Vec::with_capacity(t_len * 2 * h);
        for t in 0..t_len {
            hidden.extend_from_slice(&fwd[t].h);
            hidden.extend_from_slice(&bwd[t].h);
        }
        Ok((
            hidden,
            BiGruTrace {
                forward: fwd,
                backward: bwd,
            },
        ))
    }
}

/// The `T × 2H` BiGRU output for `sequence` (`T × D`, time-major).
pub fn bigru_forward(params: &BiGruParams, sequence: &[f64]) -> Result<Vec<f64>> {
    Ok(params.run(sequence)?.0)
}

/// BiGRU → dropout → attention pooling → dropout → dense softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiGruAttnModel {
    pub arch: BiGruArch,
    pub bigru: BiGruParams,
    pub attention: AttentionParams,
    /// `2H → 3`
    pub head: DenseLayer,
}

/// Everything from one forward pass needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub trace: BiGruTrace,
    /// Hidden matrix after dropout.
    pub hidden: Vec<f64>,
    pub hidden_mask: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Context after dropout (the head's input).
    pub context: Vec<f64>,
    pub context_mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Output of [`BiGruAttnModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruPrediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    pub attention: Vec<f64>,
}

impl BiGruAttnModel {
    pub fn new(arch: BiGruArch, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let forward = GruCellParams::glorot(arch.hidden, arch.input_dim, &mut rng);
        let backward = GruCellParams::glorot(arch.hidden, arch.input_dim, &mut rng);
        let attention = AttentionParams::glorot(2 * arch.hidden, &mut rng);
        let head = DenseLayer::glorot(2 * arch.hidden, NUM_CLASSES, &mut rng);
        Self {
            arch,
            bigru: BiGruParams { forward, backward },
            attention,
            head,
        }
    }

    pub fn zeros(arch: BiGruArch) -> Self {
        Self {
            bigru: BiGruParams {
                forward: GruCellParams::zeros(arch.hidden, arch.input_dim),
                backward: GruCellParams::zeros(arch.hidden, arch.input_dim),
            },
            attention: AttentionParams::zeros(2 * arch.hidden),
            head: DenseLayer::zeros(2 * arch.hidden, NUM_CLASSES),
            arch,
        }
    }

    /// Forward pass; train mode (dropout on hidden rows and on the context)
    /// when `dropout` is given.
    pub fn forward(&self, sequence: &[f64], mut dropout: Option<&mut DetRng>) -> Result<(Vec<f64>, ForwardCache)> {
        let (mut hidden, trace) = self.bigru.run(sequence)?;
        let width = 2 * self.arch.hidden;
        let rate = self.arch.dropout_rate;

        let hidden_mask = dropout.as_deref_mut().map(|rng| dropout_mask(hidden.len(), rate, rng));
        if let Some(mask) = &hidden_mask {
            hidden.iter_mut().zip(mask).for_each(|(h, m)| *h *= m);
        }

        let alpha = self.attention.weights(&hidden);
        let mut context = vec![0.0; width];
        for (row, &a) in hidden.chunks_exact(width).zip(&alpha) {
            for (c, &h) in context.iter_mut().zip(row) {
                *c += a * h;
            }
        }
        let context_mask = dropout.map(|rng| dropout_mask(width, rate, rng));
        if let Some(mask) = &context_mask {
            context.iter_mut().zip(mask).for_each(|(c, m)| *c *= m);
        }

        let logits = self.head.forward(&context);
        let probs = softmax(&logits);
        Ok((
            probs,
            ForwardCache {
                trace,
                hidden,
                hidden_mask,
                alpha,
                context,
                context_mask,
                logits,
            },
        ))
    }

    fn offsets(&self) -> [usize; 6] {
        let cell = self.bigru.forward.param_count();
        let width = 2 * self.arch.hidden;
        let fwd = 0;
        let bwd = fwd + cell;
        let att_w = bwd + cell;
        let att_b = att_w + width;
        let head_w = att_b + 1;
        let head_b = head_w + width * NUM_CLASSES;
        [fwd, bwd, att_w, att_b, head_w, head_b]
    }

    /// Backpropagation through the head, attention and both recurrences.
    pub fn backward(&self, sequence: &[f64], cache: &ForwardCache, probs: &[f64], label: usize, grad: &mut [f64]) {
        let h = self.arch.hidden;
        let d = self.arch.input_dim;
        let width = 2 * h;
        let t_len = cache.alpha.len();
        let [fwd_off, bwd_off, att_w_off, _, head_w_off, head_b_off] = self.offsets();
        let cell_len = bwd_off - fwd_off;

        let (_, dlogits) = xent_loss(probs, label, &[], 0.0);
        let mut dcontext = vec![0.0; width];
        {
            let (dw, db) = grad[head_w_off..head_b_off + NUM_CLASSES].split_at_mut(width * NUM_CLASSES);
            self.head.backward(&cache.context, &dlogits, dw, db, Some(&mut dcontext));
        }
        if let Some(mask) = &cache.context_mask {
            dcontext.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }

        // c = Σ α_t h_t, α = softmax(w·h_t + b)
        let rows: Vec<&[f64]> = cache.hidden.chunks_exact(width).collect();
        let dalpha: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&dcontext).map(|(a, b)| a * b).sum())
            .collect();
        let mean: f64 = cache.alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
        let dscore: Vec<f64> = cache
            .alpha
            .iter()
            .zip(&dalpha)
            .map(|(a, g)| a * (g - mean))
            .collect();

        let mut dhidden = vec![0.0; t_len * width];
        for t in 0..t_len {
            let row = &mut dhidden[t * width..(t + 1) * width];
            for j in 0..width {
                row[j] = cache.alpha[t] * dcontext[j] + dscore[t] * self.attention.weight[j];
                grad[att_w_off + j] += dscore[t] * rows[t][j];
            }
        }
        // the score bias cancels in the softmax, so its gradient stays zero
        if let Some(mask) = &cache.hidden_mask {
            dhidden.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }

        let x = |t: usize| &sequence[t * d..(t + 1) * d];
        let (before, after) = grad.split_at_mut(bwd_off);
        let g_fwd = &mut before[fwd_off..fwd_off + cell_len];
        let g_bwd = &mut after[..cell_len];

        let mut carry = vec![0.0; h];
        let mut dh = vec![0.0; h];
        for t in (0..t_len).rev() {
            for i in 0..h {
                dh[i] = dhidden[t * width + i] + carry[i];
            }
            self.bigru
                .forward
                .backward_step(x(t), &cache.trace.forward[t], &dh, g_fwd, &mut carry);
        }
        carry.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..t_len {
            for i in 0..h {
                dh[i] = dhidden[t * width + h + i] + carry[i];
            }
            self.bigru
                .backward
                .backward_step(x(t), &cache.trace.backward[t], &dh, g_bwd, &mut carry);
        }
    }

    /// Infer-mode prediction with the attention weights; ties go to the
    /// lowest class.
    pub fn predict(&self, sequence: &[f64]) -> Result<BiGruPrediction> {
        let (probs, cache) = self.forward(sequence, None)?;
        Ok(BiGruPrediction {
            class: argmax(&probs),
            probabilities: probs,
            attention: cache.alpha,
        })
    }
}

impl Network for BiGruAttnModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = Vec::with_capacity(16);
        t.extend(self.bigru.forward.tensors());
        t.extend(self.bigru.backward.tensors());
        t.push(&self.attention.weight);
        t.push(&self.attention.bias);
        t.push(&self.head.weights.data);
        t.push(&self.head.bias);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::with_capacity(16);
        t.extend(self.bigru.forward.tensors_mut());
        t.extend(self.bigru.backward.tensors_mut());
        t.push(&mut self.attention.weight);
        t.push(&mut self.attention.bias);
        t.push(&mut self.head.weights.data);
        t.push(&mut self.head.bias);
        t
    }

    fn penalized(&self) -> Vec<bool> {
        let cell = [true, false, true, false, true, false];
        let mut p = Vec::with_capacity(16);
        p.extend(cell);
        p.extend(cell);
        p.extend([true, false, true, false]);
        p
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
        self.backward(x, &cache, &probs, label, grad);
        Ok((loss, probs))
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, None)?.0)
    }
}

/// BiGRU training defaults: the shared schedule plus a global gradient-norm
/// clip of 5.
pub fn bigru_train_config() -> TrainConfig {
    TrainConfig {
        clip_norm: Some(5.0),
        ..TrainConfig::default()
    }
}

/// Train a freshly initialized model on standardized windows.
pub fn train_bigru(train_set: &Dataset, arch: BiGruArch, config: &TrainConfig) -> Result<(BiGruAttnModel, History)> {
    if let Some((_, channels)) = train_set.shape() {
        if channels != arch.input_dim {
            return Err(Error::shape(
                format!("{} channels", arch.input_dim),
                format!("{channels} channels"),
            ));
        }
    }
    let model = BiGruAttnModel::new(
        BiGruArch {
            dropout_rate: config.dropout_rate,
            ..arch
        },
        config.seed,
    );
    train(model, train_set, config)
}
