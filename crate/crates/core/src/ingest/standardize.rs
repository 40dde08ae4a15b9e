use serde::{Deserialize, Serialize};

use super::{Dataset, TrialWindow};
use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on training windows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; degenerate features hold 1.0.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::Empty("training set (standardizer needs >= 2 windows)"));
        }
        let d = train.num_features();
        let n = train.len() as f64;
        let mut means = vec![0.0; d];
        for w in &train.windows {
            for (m, &x) in means.iter_mut().zip(&w.values) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);

        let mut vars = vec![0.0; d];
        for w in &train.windows {
            for ((v, &m), &x) in vars.iter_mut().zip(&means).zip(&w.values) {
                let dx = x - m;
                *v += dx * dx;
            }
        }
        let stds = vars
            .iter()
            .zip(&means)
            .map(|(&v, &m)| {
                let s = (v / n).sqrt();
                // constant features only differ from their mean by rounding
                if s <= 16.0 * f64::EPSILON * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    /// Identity transform over `d` features.
    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn num_features(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check(values.len())?;
        Ok(values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect())
    }

    pub fn inverse(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check(values.len())?;
        Ok(values
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&z, (&m, &s))| z * s + m)
            .collect())
    }

    pub fn apply(&self, window: &TrialWindow) -> Result<TrialWindow> {
        Ok(TrialWindow {
            values: self.transform(&window.values)?,
            ..window.clone()
        })
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let windows = data
            .windows
            .iter()
            .map(|w| self.apply(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            windows,
            class_counts: data.class_counts,
        })
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.means.len() {
            return Err(Error::shape(
                format!("{} features", self.means.len()),
                format!("{len} features"),
            ));
        }
        Ok(())
    }
}
