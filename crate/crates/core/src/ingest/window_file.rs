//! `<stem>.windows.bin`: a JSON header line `{"count":n,"T":t,"C":c}`, then
//! `n*t*c` little-endian f32 values, then a JSON line `{"labels":[...]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrialWindow, WindowSource};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    count: usize,
    #[serde(rename = "T")]
    n_times: usize,
    #[serde(rename = "C")]
    n_channels: usize,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    labels: Vec<usize>,
}

pub fn write_windows(path: impl AsRef<Path>, windows: &[TrialWindow]) -> Result<()> {
    let path = path.as_ref();
    let (n_times, n_channels) = windows
        .first()
        .map_or((super::WINDOW_LEN, super::DEFAULT_KEEP_CHANNELS.len()), |w| {
            (w.n_times, w.n_channels)
        });
    let header = Header {
        count: windows.len(),
        n_times,
        n_channels,
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::json("window header", e))?;
    out.push(b'\n');
    for w in windows {
        if w.n_times != n_times || w.n_channels != n_channels {
            return Err(Error::shape(
                format!("{n_times}x{n_channels}"),
                format!("{}x{}", w.n_times, w.n_channels),
            ));
        }
        out.extend(w.values.iter().flat_map(|&v| (v as f32).to_le_bytes()));
    }
    let trailer = Trailer {
        labels: windows.iter().map(|w| w.label).collect(),
    };
    out.extend(serde_json::to_vec(&trailer).map_err(|e| Error::json("window labels", e))?);
    out.push(b'\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_windows(path: impl AsRef<Path>) -> Result<Vec<TrialWindow>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let context = path.display().to_string();
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Truncated(format!("{context}: missing header line")))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::json(context.clone(), e))?;
    let per_window = header.n_times * header.n_channels;
    let payload = header.count * per_window * 4;
    let start = nl + 1;
    if bytes.len() < start + payload {
        return Err(Error::LengthMismatch {
            what: format!("{context} payload bytes"),
            expected: payload,
            found: bytes.len() - start,
        });
    }
    let trailer: Trailer = serde_json::from_slice(trim_newline(&bytes[start + payload..]))
        .map_err(|e| Error::json(format!("{context} labels"), e))?;
    if trailer.labels.len() != header.count {
        return Err(Error::LengthMismatch {
            what: format!("{context} labels"),
            expected: header.count,
            found: trailer.labels.len(),
        });
    }
    let session = path
        .file_name()
        .and_then(|f| f.to_str())
        .map(|f| f.trim_end_matches(".windows.bin").to_string())
        .unwrap_or_default();

    bytes[start..start + payload]
        .chunks_exact(per_window * 4)
        .zip(trailer.labels)
        .enumerate()
        .map(|(i, (chunk, label))| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            TrialWindow::new(
                values,
                header.n_times,
                header.n_channels,
                label,
                WindowSource {
                    session: session.clone(),
                    onset: i,
                },
            )
        })
        .collect()
}

fn trim_newline(b: &[u8]) -> &[u8] {
    b.strip_suffix(b"\n").unwrap_or(b)
}
