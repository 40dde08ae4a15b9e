use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::{argmax, NUM_CLASSES};

/// Relative variance floor: `var_floor = GNB_VAR_SMOOTHING * max feature variance`.
pub const GNB_VAR_SMOOTHING: f64 = 1e-9;

/// Per-class independent Gaussians over each feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub priors: Vec<f64>,
    /// `means[class][feature]`
    pub means: Vec<Vec<f64>>,
    /// `variances[class][feature]`, never below `var_floor`.
    pub variances: Vec<Vec<f64>>,
    pub var_floor: f64,
}

fn mean_var(rows: &[&[f64]], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(*r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(*r) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

impl GnbModel {
    pub fn fit(train: &Dataset) -> Result<Self> {
        for (class, &count) in train.class_counts.iter().enumerate() {
            if count == 0 {
                return Err(Error::InsufficientClass {
                    class,
                    count,
                    needed: 1,
                });
            }
        }
        let d = train.num_features();
        let all: Vec<&[f64]> = train.windows.iter().map(|w| w.features()).collect();
        let (_, overall_var) = mean_var(&all, d);
        let max_var = overall_var.iter().cloned().fold(0.0, f64::max);
        let var_floor = if max_var > 0.0 {
            GNB_VAR_SMOOTHING * max_var
        } else {
            GNB_VAR_SMOOTHING
        };

        let n = train.len() as f64;
        let mut priors = Vec::with_capacity(NUM_CLASSES);
        let mut means = Vec::with_capacity(NUM_CLASSES);
        let mut variances = Vec::with_capacity(NUM_CLASSES);
        for class in 0..NUM_CLASSES {
            let rows: Vec<&[f64]> = train
                .windows
                .iter()
                .filter(|w| w.label == class)
                .map(|w| w.features())
                .collect();
            let (m, v) = mean_var(&rows, d);
            priors.push(rows.len() as f64 / n);
            means.push(m);
            variances.push(v.into_iter().map(|v| v.max(var_floor)).collect());
        }
        Ok(Self {
            priors,
            means,
            variances,
            var_floor,
        })
    }

    pub fn num_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Unnormalized joint log density `log P(C) + Σ log N(x_i; μ, σ²)` per class.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_features() {
            return Err(Error::shape(
                format!("{} features", self.num_features()),
                format!("{} features", x.len()),
            ));
        }
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        Ok((0..self.priors.len())
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(self.means[c].iter().zip(&self.variances[c]))
                    .map(|(&xi, (&m, &v))| -0.5 * (ln_2pi + v.ln() + (xi - m) * (xi - m) / v))
                    .sum();
                self.priors[c].ln() + ll
            })
            .collect())
    }

    /// Normalized log posteriors via log-sum-exp.
    pub fn log_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let jll = self.joint_log_likelihood(x)?;
        let max = jll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + jll.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(jll.into_iter().map(|v| v - lse).collect())
    }

    /// Predicted class (ties to the lowest id) and posterior probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let lp = self.log_posterior(x)?;
        let class = argmax(&lp);
        Ok((class, lp.into_iter().map(f64::exp).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{TrialWindow, WindowSource};

    fn data(rows: &[(f64, usize)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|&(x, l)| {
                    TrialWindow::new(
                        vec![x],
                        1,
                        1,
                        l,
                        WindowSource {
                            session: "g".into(),
                            onset: 1,
                        },
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn two_class(priors: [f64; 2]) -> GnbModel {
        GnbModel {
            priors: priors.to_vec(),
            means: vec![vec![0.0], vec![2.0]],
            variances: vec![vec![1.0], vec![1.0]],
            var_floor: 1e-9,
        }
    }

    #[test]
    fn population_moments() {
        let m = GnbModel::fit(&data(&[(0.0, 0), (2.0, 0), (5.0, 1), (7.0, 2)])).unwrap();
        assert_eq!(m.means[0], vec![1.0]);
        assert_eq!(m.variances[0], vec![1.0]);
        assert_eq!(m.priors, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn identical_samples_hit_the_floor() {
        let m = GnbModel::fit(&data(&[(3.0, 0), (3.0, 0), (0.0, 1), (10.0, 2)])).unwrap();
        assert_eq!(m.variances[0], vec![m.var_floor]);
        assert!(m.var_floor > 0.0);
        let (_, p) = m.predict(&[3.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_zero_variance_floor() {
        let m = GnbModel::fit(&data(&[(1.0, 0), (1.0, 1), (1.0, 2)])).unwrap();
        assert_eq!(m.var_floor, GNB_VAR_SMOOTHING);
    }

    #[test]
    fn symmetric_midpoint() {
        let (class, p) = two_class([0.5, 0.5]).predict(&[1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert_eq!(class, 0, "ties go to the lowest class");
    }

    #[test]
    fn prior_dominates_equal_likelihoods() {
        let (class, p) = two_class([0.75, 0.25]).predict(&[1.0]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert_eq!(class, 0);
    }

    #[test]
    fn missing_class_and_bad_width() {
        assert!(matches!(
            GnbModel::fit(&data(&[(0.0, 0), (1.0, 2)])),
            Err(Error::InsufficientClass { class: 1, .. })
        ));
        assert!(two_class([0.5, 0.5]).predict(&[1.0, 2.0]).is_err());
    }
}
