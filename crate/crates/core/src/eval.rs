//! Confusion matrices, per-class reports and stratified cross-validation.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Standardizer};
use crate::rng::seeded;
use crate::NUM_CLASSES;

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(actual: &[usize], predicted: &[usize]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                what: "predicted labels".into(),
                expected: actual.len(),
                found: predicted.len(),
            });
        }
        let mut cm = Self::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= NUM_CLASSES {
                return Err(Error::InvalidLabel(a));
            }
            if p >= NUM_CLASSES {
                return Err(Error::InvalidLabel(p));
            }
            cm.counts[a][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for a in 0..NUM_CLASSES {
            for p in 0..NUM_CLASSES {
                self.counts[a][p] += other.counts[a][p];
            }
        }
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "actual,pred_0,pred_1,pred_2")?;
        for (a, row) in self.counts.iter().enumerate() {
            writeln!(out, "{a},{},{},{}", row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

/// Alias kept for call sites that read better as a function.
pub fn confusion_matrix(actual: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(actual, predicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and F1, plus
/// accuracy and macro / support-weighted averages. Zero denominators give 0.
pub fn class_report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let classes: Vec<ClassMetrics> = (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: usize = (0..NUM_CLASSES).map(|a| cm.counts[a][c]).sum();
            let support = cm.support(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            }
        })
        .collect();

    let k = NUM_CLASSES as f64;
    let macro_avg = ClassMetrics {
        precision: classes.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: classes.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: classes.iter().map(|m| m.f1).sum::<f64>() / k,
        support: total,
    };
    // integer weights reduced by their gcd, so equal supports reduce to the
    // plain mean and match the macro average bit for bit
    let g = classes.iter().fold(0, |g, m| gcd(g, m.support));
    let weights: Vec<usize> = classes.iter().map(|m| m.support / g).collect();
    let weight_sum: usize = weights.iter().sum();
    let w = |f: fn(&ClassMetrics) -> f64| {
        let acc = classes
            .iter()
            .zip(&weights)
            .map(|(m, &wt)| if wt == 1 { f(m) } else { f(m) * wt as f64 })
            .sum::<f64>();
        acc / weight_sum as f64
    };
    let weighted_avg = ClassMetrics {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
        support: total,
    };
    Ok(ClassReport {
        classes,
        accuracy: cm.trace() as f64 / total as f64,
        macro_avg,
        weighted_avg,
    })
}

/// Split indices into `k` stratified folds. Within each class the indices
/// are shuffled (when `shuffle`), then dealt in contiguous runs so that the
/// first `count % k` folds take one extra member. Each fold is sorted.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be >= 2".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        if l >= NUM_CLASSES {
            return Err(Error::InvalidLabel(l));
        }
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::InsufficientClass {
                class,
                count: members.len(),
                needed: k,
            });
        }
    }
    let mut rng = seeded(seed);
    let mut folds = vec![Vec::new(); k];
    for members in &mut by_class {
        if shuffle {
            members.shuffle(&mut rng);
        }
        let base = members.len() / k;
        let extra = members.len() % k;
        let mut start = 0;
        for (f, fold) in folds.iter_mut().enumerate() {
            let size = base + usize::from(f < extra);
            fold.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Arithmetic mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl CvResult {
    pub fn from_folds(folds: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&folds);
        Self { folds, mean, sd }
    }
}

/// Per-fold bookkeeping, kept so leakage can be audited.
#[derive(Debug, Clone)]
pub struct FoldRecord {
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    /// Standardizer fitted on `train_indices` only.
    pub standardizer: Standardizer,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub result: CvResult,
    pub records: Vec<FoldRecord>,
    /// Sum of the per-fold confusion matrices (out-of-fold predictions).
    pub pooled: ConfusionMatrix,
}

/// Something that predicts a class from a standardized feature vector.
pub trait Classifier {
    fn predict_class(&self, x: &[f64]) -> Result<usize>;
}

/// A recipe that fits a classifier on standardized training data.
pub trait ModelSpec {
    type Model: Classifier;
    fn fit(&self, train: &Dataset) -> Result<Self::Model>;
}

/// Stratified k-fold cross-validation. Each fold refits the standardizer on
/// its own training split before fitting the model.
pub fn cross_validate<S: ModelSpec>(spec: &S, data: &Dataset, k: usize, seed: u64) -> Result<CvOutcome> {
    let folds = stratified_kfold(&data.labels(), k, seed, true)?;
    let mut accuracies = Vec::with_capacity(k);
    let mut records = Vec::with_capacity(k);
    let mut pooled = ConfusionMatrix::default();
    for f in 0..folds.len() {
        let record = run_fold(spec, data, &folds, f).map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        accuracies.push(record.confusion.trace() as f64 / record.confusion.total() as f64);
        pooled.merge(&record.confusion);
        records.push(record);
    }
    Ok(CvOutcome {
        result: CvResult::from_folds(accuracies),
        records,
        pooled,
    })
}

fn run_fold<S: ModelSpec>(spec: &S, data: &Dataset, folds: &[Vec<usize>], f: usize) -> Result<FoldRecord> {
    let val = &folds[f];
    let mut train_idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != f)
        .flat_map(|(_, fold)| fold.iter().copied())
        .collect();
    train_idx.sort_unstable();
    let train_raw = data.subset(&train_idx);
    let standardizer = Standardizer::fit(&train_raw)?;
    let model = spec.fit(&standardizer.apply_dataset(&train_raw)?)?;

    let mut actual = Vec::with_capacity(val.len());
    let mut predicted = Vec::with_capacity(val.len());
    for &i in val {
        let w = &data.windows[i];
        actual.push(w.label);
        predicted.push(model.predict_class(&standardizer.transform(w.features())?)?);
    }
    Ok(FoldRecord {
        train_indices: train_idx,
        val_indices: val.clone(),
        standardizer,
        confusion: ConfusionMatrix::from_labels(&actual, &predicted)?,
    })
}
