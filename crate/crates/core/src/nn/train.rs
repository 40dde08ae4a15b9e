use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::linalg::add_assign;
use super::network::Network;
use crate::error::{Error, Result};
use crate::ingest::{stratified_split, Dataset};
use crate::rng::{derive_seed, seeded};
use crate::{argmax, NUM_CLASSES};

/// Samples per parallel gradient chunk. Fixed so the reduction order, and
/// therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Global gradient-norm clip, if any.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            l2_lambda: 0.01,
            dropout_rate: 0.2,
            batch_size: 128,
            max_epochs: 100,
            early_stop_patience: 10,
            validation_fraction: 0.2,
            seed: 42,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must be in [0, 1)");
        }
        if self.l2_lambda < 0.0 || !self.l2_lambda.is_finite() {
            return bad("l2 lambda must be >= 0");
        }
        if self.early_stop_patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epochs must be >= 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must be in (0, 1)");
        }
        if self.learning_rate < 0.0 {
            return bad("learning rate must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Infer-mode loss on the fitting split before the first update.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    /// One JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct BatchStats {
    loss: f64,
    correct: usize,
}

fn batch_gradient<N: Network>(
    net: &N,
    data: &Dataset,
    batch: &[usize],
    epoch: usize,
    seed: u64,
    grad: &mut [f64],
) -> Result<BatchStats> {
    let p = grad.len();
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| -> Result<(Vec<f64>, f64, usize)> {
            let mut g = vec![0.0; p];
            let mut loss = 0.0;
            let mut correct = 0;
            for &i in chunk {
                let w = &data.windows[i];
                let mut rng = seeded(derive_seed(seed, epoch as u64, i as u64));
                let (l, probs) = net.accumulate_gradient(w.features(), w.label, Some(&mut rng), &mut g)?;
                loss += l;
                correct += usize::from(argmax(&probs) == w.label);
            }
            Ok((g, loss, correct))
        })
        .collect::<Result<Vec<_>>>()?;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut stats = BatchStats {
        loss: 0.0,
        correct: 0,
    };
    for (g, l, c) in partials {
        add_assign(grad, &g);
        stats.loss += l;
        stats.correct += c;
    }
    Ok(stats)
}

/// Mean infer-mode cross-entropy and accuracy over `indices`.
pub fn evaluate_loss<N: Network>(net: &N, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    let per: Vec<(f64, bool)> = indices
        .par_iter()
        .map(|&i| {
            let w = &data.windows[i];
            let probs = net.probabilities(w.features())?;
            let loss = -probs[w.label].max(super::loss::PROB_FLOOR).ln();
            Ok((loss, argmax(&probs) == w.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per.len().max(1) as f64;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    let acc = per.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((loss, acc))
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Mini-batch Adam training with a stratified validation holdout and early
/// stopping on validation loss. The weights of the best epoch are returned.
///
/// Reported losses include the `(λ/2)‖W‖²` penalty.
pub fn train<N: Network>(mut net: N, data: &Dataset, config: &TrainConfig) -> Result<(N, History)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let (fit_idx, val_idx) = stratified_split(&data.labels(), config.validation_fraction, config.seed)?;
    if fit_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "training set too small for a validation holdout".into(),
        ));
    }

    let p = net.param_count();
    let mut adam = AdamState::new(p);
    let mut grad = vec![0.0; p];
    let mut order = fit_idx.clone();
    let mut shuffle_rng = seeded(config.seed);
    let (initial_xent, _) = evaluate_loss(&net, data, &fit_idx)?;
    let mut history = History {
        initial_train_loss: initial_xent + net.penalty(config.l2_lambda),
        ..History::default()
    };
    let mut best: Option<(f64, N)> = None;
    let mut wait = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let stats = batch_gradient(&net, data, batch, epoch, config.seed, &mut grad)?;
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            net.add_penalty_gradient(config.l2_lambda, &mut grad);
            let batch_loss = stats.loss / n + net.penalty(config.l2_lambda);
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss in epoch {}; last good weights are from epoch {}",
                    epoch + 1,
                    history.best_epoch
                )));
            }
            if let Some(max_norm) = config.clip_norm {
                clip(&mut grad, max_norm);
            }
            adam.step(net.tensors_mut(), &grad, config.learning_rate)?;
            loss_sum += batch_loss * n;
            correct += stats.correct;
        }

        let (val_xent, val_acc) = evaluate_loss(&net, data, &val_idx)?;
        let val_loss = val_xent + net.penalty(config.l2_lambda);
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss in epoch {}",
                epoch + 1
            )));
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / fit_idx.len() as f64,
            val_loss,
            train_acc: correct as f64 / fit_idx.len() as f64,
            val_acc,
        });

        match &best {
            Some((b, _)) if val_loss >= *b => {
                wait += 1;
                if wait >= config.early_stop_patience {
                    history.stopped_early = true;
                    break;
                }
            }
            _ => {
                best = Some((val_loss, net.clone()));
                history.best_epoch = epoch + 1;
                wait = 0;
            }
        }
    }

    if let Some((_, b)) = best {
        net = b;
    }
    Ok((net, history))
}

/// Predicted class per window, infer mode.
pub fn predict_all<N: Network>(net: &N, data: &Dataset) -> Result<Vec<usize>> {
    data.windows
        .par_iter()
        .map(|w| net.probabilities(w.features()).map(|p| argmax(&p)))
        .collect()
}

/// Probabilities are a valid distribution over the classes.
pub fn check_distribution(p: &[f64]) -> bool {
    p.len() == NUM_CLASSES
        && p.iter().all(|v| (0.0..=1.0).contains(v))
        && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6
}
