//! Seeded synthetic data: session bundles with class-dependent evoked
//! responses and the small toy problems used to exercise the classifiers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ingest::{Dataset, SessionMeta, TrialWindow, WindowSource};
use crate::rng::seeded;
use crate::NUM_CLASSES;

/// The 22 recorded channels, in acquisition order.
pub const RAW_CHANNEL_NAMES: [&str; 22] = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "A1", "A2", "F7", "F8", "T3",
    "T4", "T5", "T6", "Fz", "Cz", "Pz", "X5",
];

/// Parameters of a generated session.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub id: String,
    pub seed: u64,
    /// Number of keypress segments; each is followed by a rest segment.
    pub keypresses: usize,
    /// Samples per marker segment.
    pub segment_len: usize,
    pub sample_rate_hz: u32,
    /// Background noise standard deviation in microvolts.
    pub noise_uv: f64,
    /// Peak amplitude of the evoked response in microvolts.
    pub response_uv: f64,
}

impl SessionSpec {
    pub fn new(id: impl Into<String>, seed: u64, keypresses: usize) -> Self {
        Self {
            id: id.into(),
            seed,
            keypresses,
            segment_len: 240,
            sample_rate_hz: 200,
            noise_uv: 10.0,
            response_uv: 8.0,
        }
    }
}

/// A generated 22-channel session: metadata, row-major samples and markers.
pub struct SyntheticSession {
    pub meta: SessionMeta,
    pub samples: Vec<f32>,
    pub markers: Vec<u8>,
}

fn channel_index(name: &str) -> usize {
    RAW_CHANNEL_NAMES.iter().position(|&c| c == name).unwrap()
}

/// Generate a session. Markers start at rest, then alternate keypress (`d` or
/// `l`, chosen at random) and rest segments, so onsets split roughly 2:1:1
/// between rest, `d` and `l`. Every onset is followed by a class-specific
/// evoked waveform on a few channels.
pub fn generate_session(spec: &SessionSpec) -> SyntheticSession {
    let mut rng = seeded(spec.seed);
    let seg = spec.segment_len;
    let n = seg * (2 * spec.keypresses + 1);
    let mut markers = vec![0u8; n];
    for k in 0..spec.keypresses {
        let key: u8 = if rng.random::<bool>() { 1 } else { 2 };
        let start = seg * (2 * k + 1);
        markers[start..start + seg].fill(key);
    }

    let c = RAW_CHANNEL_NAMES.len();
    let mut samples: Vec<f32> = (0..n * c)
        .map(|_| (spec.noise_uv * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();

    let targets: [&[&str]; NUM_CLASSES] = [&["Pz", "P3", "P4"], &["C3", "F3", "T3"], &["C4", "F4", "T4"]];
    let fs = f64::from(spec.sample_rate_hz);
    for t0 in 1..n {
        if markers[t0] == markers[t0 - 1] {
            continue;
        }
        let class = usize::from(markers[t0]);
        let sign = if class == 0 { -1.0 } else { 1.0 };
        for t in t0..(t0 + seg).min(n) {
            let secs = (t - t0) as f64 / fs;
            // bump peaking ~300 ms after onset
            let shape = (-((secs - 0.3) / 0.1).powi(2)).exp();
            for name in targets[class] {
                let idx = t * c + channel_index(name);
                samples[idx] += (sign * spec.response_uv * shape) as f32;
            }
        }
    }

    SyntheticSession {
        meta: SessionMeta {
            id: spec.id.clone(),
            num_samples: n,
            sample_rate_hz: spec.sample_rate_hz,
            channel_names: RAW_CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        },
        samples,
        markers,
    }
}

fn source(i: usize) -> WindowSource {
    WindowSource {
        session: "synthetic".into(),
        onset: i,
    }
}

/// Sequence task: class `k` windows are `n_times × n_channels` draws from
/// N(2k, 1). Labels cycle 0, 1, 2.
pub fn sequence_task(seed: u64, n: usize, n_times: usize, n_channels: usize) -> Dataset {
    let mut rng = seeded(seed);
    let windows = (0..n)
        .map(|i| {
            let label = i % NUM_CLASSES;
            let mean = 2.0 * label as f64;
            let values = (0..n_times * n_channels)
                .map(|_| mean + rng.sample::<f64, _>(StandardNormal))
                .collect();
            TrialWindow::new(values, n_times, n_channels, label, source(i)).unwrap()
        })
        .collect();
    Dataset::new(windows).unwrap()
}

/// Three isotropic unit-variance Gaussian blobs in `dim` dimensions. Class
/// `k` is centred `separation` along axis `k`, so centres are
/// `separation·√2` apart. Stored as 1-row windows.
pub fn gaussian_blobs(seed: u64, n: usize, dim: usize, separation: f64) -> Dataset {
    assert!(dim >= NUM_CLASSES);
    let mut rng = seeded(seed);
    let windows = (0..n)
        .map(|i| {
            let label = i % NUM_CLASSES;
            let values = (0..dim)
                .map(|j| {
                    let centre = if j == label {
                        separation
                    } else {
                        0.0
                    };
                    centre + rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            TrialWindow::new(values, 1, dim, label, source(i)).unwrap()
        })
        .collect();
    Dataset::new(windows).unwrap()
}
