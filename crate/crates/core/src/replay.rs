//! Key mapping, prediction events and the replay state machine.
//!
//! [`ReplaySession`] holds no clock. A driver asks [`ReplaySession::interval`]
//! how long to wait, then calls [`ReplaySession::emit_next`].

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrialWindow;
use crate::model::Prediction;

/// What a decoded class types: rest types nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Key {
    None,
    D,
    L,
}

impl Key {
    pub fn from_class(class: usize) -> Result<Key> {
        match class {
            0 => Ok(Key::None),
            1 => Ok(Key::D),
            2 => Ok(Key::L),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    pub fn class(self) -> usize {
        match self {
            Key::None => 0,
            Key::D => 1,
            Key::L => 2,
        }
    }

    pub fn as_char(self) -> Option<char> {
        match self {
            Key::None => None,
            Key::D => Some('d'),
            Key::L => Some('l'),
        }
    }
}

/// Text typed by a sequence of decoded classes.
pub fn accumulate_text(classes: &[usize]) -> Result<String> {
    let mut text = String::new();
    for &c in classes {
        text.extend(Key::from_class(c)?.as_char());
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEvent {
    /// Emission counter, strictly increasing within a session.
    pub ordinal: u64,
    /// Index of the window in its set, when the event came from a replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub class: usize,
    pub key: Key,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<f64>>,
    pub latency_ms: f64,
}

impl PredictionEvent {
    pub fn new(ordinal: u64, window: Option<usize>, prediction: Prediction, latency: Duration) -> Result<Self> {
        Ok(Self {
            ordinal,
            window,
            class: prediction.class,
            key: Key::from_class(prediction.class)?,
            probs: prediction.probabilities,
            attention: prediction.attention,
            latency_ms: latency.as_secs_f64() * 1e3,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayState {
    Playing,
    Paused,
    Finished,
}

/// Cursor, pacing and accumulated text for one replay.
#[derive(Debug, Clone)]
pub struct ReplaySession {
    windows: Arc<Vec<TrialWindow>>,
    cursor: usize,
    /// Windows per second.
    speed: f64,
    state: ReplayState,
    model_id: String,
    next_ordinal: u64,
    text: String,
}

impl ReplaySession {
    /// Starts playing unless `speed` is 0, which starts paused.
    pub fn new(windows: Arc<Vec<TrialWindow>>, model_id: impl Into<String>, speed: f64) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Empty("window set"));
        }
        check_speed(speed)?;
        Ok(Self {
            windows,
            cursor: 0,
            speed,
            state: if speed > 0.0 { ReplayState::Playing } else { ReplayState::Paused },
            model_id: model_id.into(),
            next_ordinal: 0,
            text: String::new(),
        })
    }

    pub fn state(&self) -> ReplayState {
        self.state
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn windows(&self) -> &Arc<Vec<TrialWindow>> {
        &self.windows
    }

    /// Resume. A session paused by speed 0 resumes at 1 window/s.
    pub fn play(&mut self) {
        if self.state == ReplayState::Finished {
            return;
        }
        if self.speed == 0.0 {
            self.speed = 1.0;
        }
        self.state = ReplayState::Playing;
    }

    pub fn pause(&mut self) {
        if self.state != ReplayState::Finished {
            self.state = ReplayState::Paused;
        }
    }

    /// Pause and report whether one more window is available to emit.
    pub fn step(&mut self) -> bool {
        self.pause();
        self.cursor < self.windows.len()
    }

    /// Move the cursor (clamped to the set). Seeking away from the end of a
    /// finished replay leaves it paused.
    pub fn seek(&mut self, position: usize) {
        self.cursor = position.min(self.windows.len());
        if self.cursor == self.windows.len() {
            self.state = ReplayState::Finished;
        } else if self.state == ReplayState::Finished {
            self.state = ReplayState::Paused;
        }
    }

    /// Speed 0 pauses.
    pub fn set_speed(&mut self, speed: f64) -> Result<()> {
        check_speed(speed)?;
        self.speed = speed;
        if speed == 0.0 {
            self.pause();
        }
        Ok(())
    }

    pub fn select_model(&mut self, id: impl Into<String>) {
        self.model_id = id.into();
    }

    /// Gap between emissions while playing.
    pub fn interval(&self) -> Option<Duration> {
        (self.state == ReplayState::Playing && self.speed > 0.0).then(|| Duration::from_secs_f64(1.0 / self.speed))
    }

    /// Index and contents of the window under the cursor.
    pub fn next_window(&self) -> Option<(usize, &TrialWindow)> {
        self.windows.get(self.cursor).map(|w| (self.cursor, w))
    }

    /// Turn a prediction for the window under the cursor into the next
    /// event, then advance.
    pub fn record(&mut self, prediction: Prediction, latency: Duration) -> Result<PredictionEvent> {
        if self.cursor >= self.windows.len() {
            return Err(Error::InvalidArgument("replay already consumed every window".into()));
        }
        let event = PredictionEvent::new(self.next_ordinal, Some(self.cursor), prediction, latency)?;
        self.text.extend(event.key.as_char());
        self.next_ordinal += 1;
        self.cursor += 1;
        if self.cursor == self.windows.len() {
            self.state = ReplayState::Finished;
        }
        Ok(event)
    }

    /// Predict the window under the cursor, advance, and return the event.
    /// `None` once every window has been consumed.
    pub fn emit_next(
        &mut self,
        predict: impl FnOnce(&TrialWindow) -> Result<Prediction>,
    ) -> Result<Option<PredictionEvent>> {
        let Some((_, window)) = self.next_window() else {
            self.state = ReplayState::Finished;
            return Ok(None);
        };
        let started = Instant::now();
        let prediction = predict(window)?;
        self.record(prediction, started.elapsed()).map(Some)
    }
}

fn check_speed(speed: f64) -> Result<()> {
    if speed.is_finite() && speed >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("speed must be finite and >= 0, got {speed}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::WindowSource;

    fn windows(labels: &[usize]) -> Arc<Vec<TrialWindow>> {
        Arc::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    TrialWindow::new(vec![l as f64], 1, 1, l, WindowSource { session: "s".into(), onset: i }).unwrap()
                })
                .collect(),
        )
    }

    fn oracle(w: &TrialWindow) -> Result<Prediction> {
        let mut p = vec![0.0; 3];
        p[w.label] = 1.0;
        Ok(Prediction {
            class: w.label,
            probabilities: p,
            attention: None,
        })
    }

    #[test]
    fn key_mapping() {
        assert_eq!(Key::from_class(0).unwrap(), Key::None);
        assert_eq!(Key::from_class(1).unwrap(), Key::D);
        assert_eq!(Key::from_class(2).unwrap(), Key::L);
        assert!(Key::from_class(3).is_err());
        assert_eq!(serde_json::to_string(&Key::None).unwrap(), "\"none\"");
        assert_eq!(accumulate_text(&[1, 0, 2, 1]).unwrap(), "dld");
    }

    #[test]
    fn perfect_replay_types_dl() {
        let mut s = ReplaySession::new(windows(&[1, 0, 2]), "m", 1.0).unwrap();
        let mut ordinals = Vec::new();
        while let Some(e) = s.emit_next(oracle).unwrap() {
            ordinals.push(e.ordinal);
        }
        assert_eq!(ordinals, [0, 1, 2]);
        assert_eq!(s.text(), "dl");
        assert_eq!(s.state(), ReplayState::Finished);
        assert_eq!(s.interval(), None);
    }

    #[test]
    fn speed_zero_waits_for_play() {
        let mut s = ReplaySession::new(windows(&[1, 2]), "m", 0.0).unwrap();
        assert_eq!(s.state(), ReplayState::Paused);
        assert_eq!(s.interval(), None);
        s.play();
        assert_eq!(s.interval(), Some(Duration::from_secs(1)));
        s.set_speed(0.0).unwrap();
        assert_eq!(s.state(), ReplayState::Paused);
        assert!(s.set_speed(-1.0).is_err());
        assert!(s.set_speed(f64::NAN).is_err());
    }

    #[test]
    fn step_and_seek() {
        let mut s = ReplaySession::new(windows(&[1, 2, 0]), "m", 2.0).unwrap();
        assert_eq!(s.interval(), Some(Duration::from_millis(500)));
        assert!(s.step());
        let e = s.emit_next(oracle).unwrap().unwrap();
        assert_eq!((e.window, e.key), (Some(0), Key::D));
        s.seek(99);
        assert_eq!((s.cursor(), s.state()), (3, ReplayState::Finished));
        s.play();
        assert_eq!(s.state(), ReplayState::Finished);
        s.seek(0);
        assert_eq!(s.state(), ReplayState::Paused);
        let e = s.emit_next(oracle).unwrap().unwrap();
        // ordinals keep counting after a seek back
        assert_eq!((e.ordinal, e.window), (1, Some(0)));
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(ReplaySession::new(Arc::new(Vec::new()), "m", 1.0).is_err());
    }
}
