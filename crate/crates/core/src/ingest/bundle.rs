use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MAX_MARKER, NUM_RAW_CHANNELS};
use crate::error::{Error, Result};

/// Contents of `<stem>.meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    #[serde(rename = "nS")]
    pub num_samples: usize,
    #[serde(rename = "sampFreq")]
    pub sample_rate_hz: u32,
    #[serde(rename = "channels")]
    pub channel_names: Vec<String>,
}

impl SessionMeta {
    /// Sample period in seconds.
    pub fn sample_period(&self) -> f64 {
        1.0 / f64::from(self.sample_rate_hz)
    }
}

/// A loaded session restricted to the retained channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub meta: SessionMeta,
    /// Retained channel names, in column order of `samples`.
    pub channels: Vec<String>,
    /// Row-major `num_samples × channels.len()` microvolt values.
    pub samples: Vec<f32>,
    pub markers: Vec<u8>,
}

impl RawSession {
    pub fn num_samples(&self) -> usize {
        self.markers.len()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    #[inline]
    pub fn sample(&self, t: usize, channel: usize) -> f32 {
        self.samples[t * self.channels.len() + channel]
    }

    /// Column of one retained channel.
    pub fn channel(&self, channel: usize) -> Vec<f32> {
        (0..self.num_samples())
            .map(|t| self.sample(t, channel))
            .collect()
    }
}

/// `<stem><suffix>` without treating dots in the stem as an extension.
pub fn stem_path(stem: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load a session bundle and keep only `keep_channels`, in that order.
pub fn load_session(stem: impl AsRef<Path>, keep_channels: &[String]) -> Result<RawSession> {
    let stem = stem.as_ref();
    let meta_path = stem_path(stem, ".meta.json");
    let meta_bytes = read_file(&meta_path)?;
    let meta: SessionMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::json(meta_path.display().to_string(), e))?;

    if meta.sample_rate_hz == 0 {
        return Err(Error::InvalidArgument("sampFreq must be positive".into()));
    }
    if meta.channel_names.len() != NUM_RAW_CHANNELS {
        return Err(Error::LengthMismatch {
            what: "channel list".into(),
            expected: NUM_RAW_CHANNELS,
            found: meta.channel_names.len(),
        });
    }

    let columns = keep_channels
        .iter()
        .map(|name| {
            meta.channel_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownChannel(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = meta.num_samples;
    let eeg = read_file(&stem_path(stem, ".eeg"))?;
    let expected = n * NUM_RAW_CHANNELS * 4;
    if eeg.len() != expected {
        return Err(Error::LengthMismatch {
            what: "eeg payload bytes".into(),
            expected,
            found: eeg.len(),
        });
    }
    let markers = read_file(&stem_path(stem, ".markers"))?;
    if markers.len() != n {
        return Err(Error::LengthMismatch {
            what: "marker count".into(),
            expected: n,
            found: markers.len(),
        });
    }
    if let Some((index, &value)) = markers.iter().enumerate().find(|(_, &m)| m > MAX_MARKER) {
        return Err(Error::InvalidMarker { index, value });
    }

    let mut samples = Vec::with_capacity(n * columns.len());
    for row in eeg.chunks_exact(NUM_RAW_CHANNELS * 4) {
        for &c in &columns {
            let b = &row[c * 4..c * 4 + 4];
            samples.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
    }

    Ok(RawSession {
        meta,
        channels: keep_channels.to_vec(),
        samples,
        markers,
    })
}

/// Write a full 22-channel bundle. `samples` is row-major `nS × 22`.
pub fn write_session(
    stem: impl AsRef<Path>,
    meta: &SessionMeta,
    samples: &[f32],
    markers: &[u8],
) -> Result<()> {
    let stem = stem.as_ref();
    let n = meta.num_samples;
    if samples.len() != n * meta.channel_names.len() {
        return Err(Error::LengthMismatch {
            what: "samples".into(),
            expected: n * meta.channel_names.len(),
            found: samples.len(),
        });
    }
    if markers.len() != n {
        return Err(Error::LengthMismatch {
            what: "markers".into(),
            expected: n,
            found: markers.len(),
        });
    }
    let meta_path = stem_path(stem, ".meta.json");
    let json = serde_json::to_vec(meta).map_err(|e| Error::json("session meta", e))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    let eeg_path = stem_path(stem, ".eeg");
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&eeg_path, bytes).map_err(|e| Error::io(&eeg_path, e))?;

    let marker_path = stem_path(stem, ".markers");
    fs::write(&marker_path, markers).map_err(|e| Error::io(&marker_path, e))?;
    Ok(())
}
