use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::rng::seeded;
use crate::{argmax, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge penalty weight.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 0.001,
            epochs: 1000,
            seed: 42,
        }
    }
}

/// One linear scorer per class (one-vs-rest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub config: SvmConfig,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1/2)‖w‖² + C Σ max(0, 1 − y (w·x + b))` for one binary problem.
pub fn svm_objective(w: &[f64], b: f64, c: f64, data: &Dataset, positive: usize) -> f64 {
    let hinge: f64 = data
        .windows
        .iter()
        .map(|win| {
            let y = if win.label == positive { 1.0 } else { -1.0 };
            (1.0 - y * (dot(w, win.features()) + b)).max(0.0)
        })
        .sum();
    0.5 * dot(w, w) + c * hinge
}

impl SvmModel {
    pub fn fit(train: &Dataset, config: SvmConfig) -> Result<Self> {
        Ok(Self::fit_traced(train, config, 0)?.0)
    }

    /// Fit, also returning the per-class objective of the averaged iterate
    /// every `trace_every` epochs (no trace when 0).
    ///
    /// Stochastic sub-gradient descent on the primal: at update `t` (counted
    /// across all epochs) the step is `1/(t+1)`, the regularizer contributes
    /// `w` and each sample stands in for the whole sum by scaling its hinge
    /// sub-gradient by `n`. The returned parameters are the running average
    /// of all iterates.
    pub fn fit_traced(
        train: &Dataset,
        config: SvmConfig,
        trace_every: usize,
    ) -> Result<(Self, Vec<[f64; NUM_CLASSES]>)> {
        let present = train.class_counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::InvalidArgument(
                "linear SVM needs at least two classes".into(),
            ));
        }
        if config.c.is_nan() || config.c <= 0.0 {
            return Err(Error::InvalidArgument("C must be positive".into()));
        }
        let d = train.num_features();
        let n = train.len();
        let scale = n as f64 * config.c;

        let mut w = vec![vec![0.0; d]; NUM_CLASSES];
        let mut b = [0.0; NUM_CLASSES];
        let mut w_avg = vec![vec![0.0; d]; NUM_CLASSES];
        let mut b_avg = [0.0; NUM_CLASSES];
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seeded(config.seed);
        let mut trace = Vec::new();
        let mut t: u64 = 0;

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let x = train.windows[i].features();
                let label = train.windows[i].label;
                let eta = 1.0 / (t as f64 + 1.0);
                let avg_rate = 1.0 / (t as f64 + 1.0);
                for k in 0..NUM_CLASSES {
                    let y = if label == k { 1.0 } else { -1.0 };
                    let margin = y * (dot(&w[k], x) + b[k]);
                    let shrink = 1.0 - eta;
                    if margin < 1.0 {
                        let step = eta * scale * y;
                        for (wj, &xj) in w[k].iter_mut().zip(x) {
                            *wj = shrink * *wj + step * xj;
                        }
                        b[k] += step;
                    } else {
                        w[k].iter_mut().for_each(|wj| *wj *= shrink);
                    }
                    for (a, &wj) in w_avg[k].iter_mut().zip(&w[k]) {
                        *a += (wj - *a) * avg_rate;
                    }
                    b_avg[k] += (b[k] - b_avg[k]) * avg_rate;
                }
                t += 1;
            }
            if trace_every > 0 && (epoch + 1) % trace_every == 0 {
                let mut obj = [0.0; NUM_CLASSES];
                for (k, o) in obj.iter_mut().enumerate() {
                    *o = svm_objective(&w_avg[k], b_avg[k], config.c, train, k);
                }
                trace.push(obj);
            }
        }

        Ok((
            Self {
                weights: w_avg,
                biases: b_avg.to_vec(),
                config,
            },
            trace,
        ))
    }

    pub fn num_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_features() {
            return Err(Error::shape(
                format!("{} features", self.num_features()),
                format!("{} features", x.len()),
            ));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    /// Class with the largest decision value; ties go to the lowest id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decision_values(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{TrialWindow, WindowSource};

    fn data(rows: &[(&[f64], usize)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|&(x, l)| {
                    TrialWindow::new(
                        x.to_vec(),
                        1,
                        x.len(),
                        l,
                        WindowSource {
                            session: "s".into(),
                            onset: 1,
                        },
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_ties_to_class_zero() {
        let m = SvmModel {
            weights: vec![vec![0.0; 4]; 3],
            biases: vec![0.0; 3],
            config: SvmConfig::default(),
        };
        assert_eq!(m.predict(&[1.0, -2.0, 3.0, 4.0]).unwrap(), 0);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let d = data(&[(&[1.0], 1), (&[2.0], 1)]);
        assert!(SvmModel::fit(&d, SvmConfig::default()).is_err());
    }

    #[test]
    fn zero_weighted_feature_does_not_change_decisions() {
        let m = SvmModel {
            weights: vec![vec![0.5, -1.0], vec![2.0, 0.0], vec![-0.3, 0.1]],
            biases: vec![0.1, -0.2, 0.3],
            config: SvmConfig::default(),
        };
        let mut wider = m.clone();
        wider.weights.iter_mut().for_each(|w| w.push(0.0));
        assert_eq!(
            m.decision_values(&[1.0, 2.0]).unwrap(),
            wider.decision_values(&[1.0, 2.0, 123.0]).unwrap()
        );
    }

    #[test]
    fn fitting_is_deterministic() {
        let d = data(&[(&[0.0, 1.0], 0), (&[1.0, 0.0], 1), (&[1.0, 1.0], 2), (&[0.1, 0.9], 0)]);
        let cfg = SvmConfig {
            epochs: 50,
            ..SvmConfig::default()
        };
        assert_eq!(SvmModel::fit(&d, cfg).unwrap(), SvmModel::fit(&d, cfg).unwrap());
    }
}
