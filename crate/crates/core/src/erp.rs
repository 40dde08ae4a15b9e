//! Onset-locked averages and marker timelines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrialWindow;

/// Mean response of one channel across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpCurve {
    pub channel: String,
    pub class_filter: Option<usize>,
    pub values: Vec<f64>,
    pub trial_count: usize,
}

/// Run of identical markers covering `[start_index, end_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSegment {
    pub start_index: usize,
    pub end_index: usize,
    pub marker: u8,
}

/// Average column `channel` over every window whose label passes the filter.
/// With `baseline_samples > 0` the mean of the first that many steps is
/// subtracted from each trial first (off by default).
pub fn compute_erp(
    windows: &[TrialWindow],
    channel: usize,
    channel_name: &str,
    class_filter: Option<usize>,
    baseline_samples: usize,
) -> Result<ErpCurve> {
    let selected: Vec<&TrialWindow> = windows
        .iter()
        .filter(|w| class_filter.is_none_or(|c| w.label == c))
        .collect();
    let first = selected.first().ok_or(Error::Empty("ERP trial selection"))?;
    let (n_times, n_channels) = (first.n_times, first.n_channels);
    if channel >= n_channels {
        return Err(Error::shape(
            format!("channel < {n_channels}"),
            format!("channel {channel}"),
        ));
    }
    if baseline_samples > n_times {
        return Err(Error::InvalidArgument(format!(
            "baseline of {baseline_samples} samples exceeds window length {n_times}"
        )));
    }

    // running mean, so k identical trials reproduce the trial exactly
    let mut mean = vec![0.0; n_times];
    for (k, w) in selected.iter().enumerate() {
        if w.n_times != n_times || w.n_channels != n_channels {
            return Err(Error::shape(
                format!("{n_times}x{n_channels}"),
                format!("{}x{}", w.n_times, w.n_channels),
            ));
        }
        let offset = if baseline_samples > 0 {
            (0..baseline_samples).map(|t| w.at(t, channel)).sum::<f64>() / baseline_samples as f64
        } else {
            0.0
        };
        let n = (k + 1) as f64;
        for (t, m) in mean.iter_mut().enumerate() {
            *m += (w.at(t, channel) - offset - *m) / n;
        }
    }
    Ok(ErpCurve {
        channel: channel_name.to_string(),
        class_filter,
        values: mean,
        trial_count: selected.len(),
    })
}

/// Run-length encoding of a marker stream.
pub fn event_timeline(markers: &[u8]) -> Vec<EventSegment> {
    let mut out: Vec<EventSegment> = Vec::new();
    for (i, &m) in markers.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.marker == m => seg.end_index = i + 1,
            _ => out.push(EventSegment {
                start_index: i,
                end_index: i + 1,
                marker: m,
            }),
        }
    }
    out
}

/// Inverse of [`event_timeline`].
pub fn expand_timeline(segments: &[EventSegment]) -> Vec<u8> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.marker, s.end_index - s.start_index))
        .collect()
}

/// CSV with columns `time_s,mean_uV,trial_count`.
pub fn write_erp_csv(curve: &ErpCurve, sample_rate_hz: f64, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "time_s,mean_uV,trial_count")?;
    for (t, v) in curve.values.iter().enumerate() {
        writeln!(out, "{},{},{}", t as f64 / sample_rate_hz, v, curve.trial_count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::WindowSource;

    fn window(values: Vec<f64>, channels: usize, label: usize) -> TrialWindow {
        let t = values.len() / channels;
        TrialWindow::new(
            values,
            t,
            channels,
            label,
            WindowSource {
                session: "e".into(),
                onset: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn mean_of_two_trials() {
        let w = [window(vec![1.0, 9.0, 1.0, 9.0], 2, 1), window(vec![3.0, 9.0, 5.0, 9.0], 2, 1)];
        let c = compute_erp(&w, 0, "Cz", None, 0).unwrap();
        assert_eq!(c.values, vec![2.0, 3.0]);
        assert_eq!(c.trial_count, 2);
    }

    #[test]
    fn single_trial_is_its_column() {
        let w = [window(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 0)];
        let c = compute_erp(&w, 1, "Pz", Some(0), 0).unwrap();
        assert_eq!(c.values, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn class_filter_and_empty_selection() {
        let w = [window(vec![1.0], 1, 0), window(vec![5.0], 1, 2)];
        assert_eq!(compute_erp(&w, 0, "x", Some(2), 0).unwrap().values, vec![5.0]);
        assert!(matches!(compute_erp(&w, 0, "x", Some(1), 0), Err(Error::Empty(_))));
    }

    #[test]
    fn baseline_flag() {
        let w = [window(vec![2.0, 4.0, 6.0], 1, 0)];
        assert_eq!(compute_erp(&w, 0, "x", None, 1).unwrap().values, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn timeline_examples() {
        let seg = |s, e, m| EventSegment {
            start_index: s,
            end_index: e,
            marker: m,
        };
        assert_eq!(
            event_timeline(&[0, 0, 1, 1, 2]),
            vec![seg(0, 2, 0), seg(2, 4, 1), seg(4, 5, 2)]
        );
        assert_eq!(event_timeline(&[1]), vec![seg(0, 1, 1)]);
        assert!(event_timeline(&[]).is_empty());
    }

    #[test]
    fn csv_layout() {
        let c = ErpCurve {
            channel: "Pz".into(),
            class_filter: Some(1),
            values: vec![0.5, -1.0],
            trial_count: 4,
        };
        let mut buf = Vec::new();
        write_erp_csv(&c, 200.0, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time_s,mean_uV,trial_count\n0,0.5,4\n0.005,-1,4\n"
        );
    }
}
