use serde::{Deserialize, Serialize};

use super::{RawSession, MAX_MARKER};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// A marker transition: `markers[sample_index] != markers[sample_index - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onset {
    pub sample_index: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSource {
    pub session: String,
    pub onset: usize,
}

/// One onset-aligned epoch, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialWindow {
    /// `n_times × n_channels` values; index `t * n_channels + c`.
    pub values: Vec<f64>,
    pub n_times: usize,
    pub n_channels: usize,
    pub label: usize,
    pub source: WindowSource,
}

impl TrialWindow {
    pub fn new(
        values: Vec<f64>,
        n_times: usize,
        n_channels: usize,
        label: usize,
        source: WindowSource,
    ) -> Result<Self> {
        if values.len() != n_times * n_channels {
            return Err(Error::shape(
                format!("{n_times}x{n_channels}"),
                format!("{} values", values.len()),
            ));
        }
        if label >= NUM_CLASSES {
            return Err(Error::InvalidLabel(label));
        }
        Ok(Self {
            values,
            n_times,
            n_channels,
            label,
            source,
        })
    }

    #[inline]
    pub fn at(&self, t: usize, channel: usize) -> f64 {
        self.values[t * self.n_channels + channel]
    }

    /// Flattened feature vector (time-major).
    pub fn features(&self) -> &[f64] {
        &self.values
    }

    pub fn num_features(&self) -> usize {
        self.values.len()
    }
}

/// Labeled windows plus per-class tallies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub windows: Vec<TrialWindow>,
    pub class_counts: [usize; NUM_CLASSES],
}

impl Dataset {
    pub fn new(windows: Vec<TrialWindow>) -> Result<Self> {
        let mut class_counts = [0; NUM_CLASSES];
        for w in &windows {
            if w.label >= NUM_CLASSES {
                return Err(Error::InvalidLabel(w.label));
            }
            class_counts[w.label] += 1;
        }
        if let Some(first) = windows.first() {
            if let Some(bad) = windows
                .iter()
                .find(|w| w.n_times != first.n_times || w.n_channels != first.n_channels)
            {
                return Err(Error::shape(
                    format!("{}x{}", first.n_times, first.n_channels),
                    format!("{}x{}", bad.n_times, bad.n_channels),
                ));
            }
        }
        Ok(Self {
            windows,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn num_features(&self) -> usize {
        self.windows.first().map_or(0, TrialWindow::num_features)
    }

    /// Window shape `(n_times, n_channels)`, if non-empty.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.windows.first().map(|w| (w.n_times, w.n_channels))
    }

    /// New dataset from the windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let windows = indices.iter().map(|&i| self.windows[i].clone()).collect();
        // labels were validated on construction
        Dataset::new(windows).expect("subset of a valid dataset")
    }
}

/// Every marker transition, in ascending sample order.
pub fn extract_onsets(markers: &[u8]) -> Result<Vec<Onset>> {
    if let Some((index, &value)) = markers.iter().enumerate().find(|(_, &m)| m > MAX_MARKER) {
        return Err(Error::InvalidMarker { index, value });
    }
    Ok(markers
        .windows(2)
        .enumerate()
        .filter(|(_, pair)| pair[0] != pair[1])
        .map(|(i, pair)| Onset {
            sample_index: i + 1,
            label: usize::from(pair[1]),
        })
        .collect())
}

/// Cut `[onset, onset + window_len)` for each onset. Windows that would run
/// past the end of the session are dropped.
pub fn extract_windows(
    session: &RawSession,
    onsets: &[Onset],
    window_len: usize,
) -> Result<Vec<TrialWindow>> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window_len must be >= 1".into()));
    }
    let n = session.num_samples();
    let c = session.num_channels();
    onsets
        .iter()
        .filter(|o| o.sample_index + window_len <= n)
        .map(|o| {
            let start = o.sample_index * c;
            let values = session.samples[start..start + window_len * c]
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            TrialWindow::new(
                values,
                window_len,
                c,
                o.label,
                WindowSource {
                    session: session.meta.id.clone(),
                    onset: o.sample_index,
                },
            )
        })
        .collect()
}
