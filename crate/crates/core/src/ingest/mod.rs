//! Session loading, onset detection, epoching, dataset splits and feature
//! standardization.
//!
//! A trial window is a `window_len × channels` block (200 × 19 by default)
//! starting at a marker transition. Windows are stored time-major: the
//! flattened feature index of `(t, c)` is `t * channels + c`.

mod bundle;
mod split;
mod standardize;
mod window;
mod window_file;

pub use bundle::{load_session, stem_path, write_session, RawSession, SessionMeta};
pub use split::{assemble_and_split, session_windows, split_by_session, stratified_split};
pub use standardize::Standardizer;
pub use window::{extract_onsets, extract_windows, Dataset, Onset, TrialWindow, WindowSource};
pub use window_file::{read_windows, write_windows};

/// Channels present in a raw session bundle.
pub const NUM_RAW_CHANNELS: usize = 22;

/// Default samples per trial window (1 s at 200 Hz).
pub const WINDOW_LEN: usize = 200;

/// Retained 10-20 montage, in output column order. A1, A2 and X5 are dropped.
pub const DEFAULT_KEEP_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "Fz", "Cz", "Pz",
];

/// Channels dropped from the montage.
pub const OMITTED_CHANNELS: [&str; 3] = ["A1", "A2", "X5"];

/// Largest valid marker value.
pub const MAX_MARKER: u8 = 2;

pub fn default_keep_channels() -> Vec<String> {
    DEFAULT_KEEP_CHANNELS.iter().map(|s| s.to_string()).collect()
}
