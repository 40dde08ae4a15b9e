//! Bodies of the offline subcommands. Every command reads from and writes
//! into one working directory (`--out`), so they chain:
//! `ingest` → `train` → `evaluate` / `crossval` / `replay`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cortexkey_core::erp::{compute_erp, write_erp_csv};
use cortexkey_core::eval::{class_report, confusion_matrix, cross_validate, ClassReport, ConfusionMatrix};
use cortexkey_core::ingest::{
    assemble_and_split, load_session, read_windows, session_windows, split_by_session, write_windows, Dataset,
    RawSession, Standardizer, TrialWindow,
};
use cortexkey_core::model::{load_model, save_model, ModelArtifact, ModelKind, WindowShape};
use cortexkey_core::replay::{PredictionEvent, ReplaySession};
use cortexkey_core::NUM_CLASSES;
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};

use crate::config::{Config, SplitMode};

pub const TRAIN_WINDOWS: &str = "train.windows.bin";
pub const TEST_WINDOWS: &str = "test.windows.bin";

/// Where `train` puts a model of the given kind.
pub fn model_path(out: &Path, kind: ModelKind) -> PathBuf {
    out.join(format!("{kind}.model"))
}

/// `--model` is either a kind name, resolved inside the working directory,
/// or a path to a model file.
pub fn resolve_model(out: &Path, model: &str) -> PathBuf {
    match model.parse::<ModelKind>() {
        Ok(kind) => model_path(out, kind),
        Err(_) => PathBuf::from(model),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_sessions(cfg: &Config) -> Result<Vec<RawSession>> {
    cfg.session_stems()?
        .iter()
        .map(|stem| load_session(stem, &cfg.data.keep_channels).with_context(|| format!("loading session {}", stem.display())))
        .collect()
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let windows = read_windows(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Dataset::new(windows)?)
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    count: usize,
    class_counts: [usize; NUM_CLASSES],
}

impl From<&Dataset> for SplitSummary {
    fn from(d: &Dataset) -> Self {
        Self {
            count: d.len(),
            class_counts: d.class_counts,
        }
    }
}

/// Epoch the configured sessions and write the train/test window sets.
pub fn ingest(cfg: &Config, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let sessions = load_sessions(cfg)?;
    let (train, test) = match cfg.data.split {
        SplitMode::Stratified => assemble_and_split(&sessions, cfg.data.window_len, cfg.data.test_fraction, seed)?,
        SplitMode::Session => split_by_session(&sessions, cfg.data.window_len, &cfg.data.test_sessions)?,
    };
    write_windows(out.join(TRAIN_WINDOWS), &train.windows)?;
    write_windows(out.join(TEST_WINDOWS), &test.windows)?;
    write_json(
        &out.join("ingest.json"),
        &json!({
            "seed": seed,
            "split": cfg.data.split,
            "sessions": sessions.iter().map(|s| &s.meta.id).collect::<Vec<_>>(),
            "channels": cfg.data.keep_channels,
            "window_len": cfg.data.window_len,
            "train": SplitSummary::from(&train),
            "test": SplitSummary::from(&test),
        }),
    )?;
    info!(train = train.len(), test = test.len(), "wrote window sets");
    Ok(())
}

/// One ERP CSV per retained channel and class, over every session's windows.
pub fn erp(cfg: &Config, out: &Path) -> Result<usize> {
    fs::create_dir_all(out)?;
    let sessions = load_sessions(cfg)?;
    let rate = f64::from(sessions[0].meta.sample_rate_hz);
    if sessions.iter().any(|s| f64::from(s.meta.sample_rate_hz) != rate) {
        bail!(cortexkey_core::Error::InvalidArgument("sessions disagree on sampling rate".into()));
    }
    let all = session_windows(&sessions, cfg.data.window_len)?;
    let mut written = 0;
    for (c, name) in sessions[0].channels.iter().enumerate() {
        for class in 0..NUM_CLASSES {
            if all.class_counts[class] == 0 {
                continue;
            }
            let curve = compute_erp(&all.windows, c, name, Some(class), 0)?;
            let path = out.join(format!("erp_{name}_{class}.csv"));
            let mut file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            write_erp_csv(&curve, rate, &mut file)?;
            file.flush()?;
            written += 1;
        }
    }
    for class in (0..NUM_CLASSES).filter(|&c| all.class_counts[c] == 0) {
        warn!(class, "no trials; skipped");
    }
    Ok(written)
}

fn accuracy(artifact: &ModelArtifact, windows: &[TrialWindow]) -> Result<ConfusionMatrix> {
    let predicted = windows
        .iter()
        .map(|w| artifact.predict(&w.values).map(|p| p.class))
        .collect::<cortexkey_core::Result<Vec<_>>>()?;
    let actual: Vec<usize> = windows.iter().map(|w| w.label).collect();
    Ok(confusion_matrix(&actual, &predicted)?)
}

/// Fit one model kind on the training windows and save it. The held-out
/// accuracy goes into the file's metadata when a test set is present.
pub fn train(cfg: &Config, seed: u64, kind: ModelKind, out: &Path) -> Result<PathBuf> {
    let train = read_dataset(&out.join(TRAIN_WINDOWS))?;
    let (n_times, n_channels) = train.shape().context("training set is empty")?;
    let standardizer = Standardizer::fit(&train)?;
    let scaled = standardizer.apply_dataset(&train)?;
    let started = Instant::now();
    let (model, history) = cfg.train_spec(kind, seed).fit_with_history(&scaled)?;
    info!(%kind, seconds = started.elapsed().as_secs_f64(), "trained");

    let artifact = ModelArtifact::new(model, standardizer, WindowShape { n_times, n_channels })?;
    let mut meta = json!({ "seed": seed, "train_count": train.len() });
    let test_path = out.join(TEST_WINDOWS);
    if test_path.exists() {
        let test = read_windows(&test_path)?;
        if !test.is_empty() {
            let cm = accuracy(&artifact, &test)?;
            meta["test_accuracy"] = json!(cm.trace() as f64 / cm.total() as f64);
        }
    }
    if let Some(h) = &history {
        meta["best_epoch"] = json!(h.best_epoch);
        meta["epochs_run"] = json!(h.epochs.len());
        let path = out.join(format!("history_{kind}.jsonl"));
        h.write_jsonl(BufWriter::new(File::create(&path)?))?;
    }
    let artifact = artifact.with_meta(meta);
    let path = model_path(out, kind);
    save_model(&artifact, &path)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub kind: ModelKind,
    pub count: usize,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    #[serde(flatten)]
    pub report: ClassReport,
}

/// Score a model on the test windows: `metrics_<kind>.json` and
/// `confusion_<kind>.csv`.
pub fn evaluate(model: &Path, out: &Path) -> Result<EvaluationReport> {
    let artifact = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let test = read_windows(out.join(TEST_WINDOWS))?;
    let cm = accuracy(&artifact, &test)?;
    let kind = artifact.kind();
    let mut csv = BufWriter::new(File::create(out.join(format!("confusion_{kind}.csv")))?);
    cm.write_csv(&mut csv)?;
    csv.flush()?;
    let report = EvaluationReport {
        kind,
        count: cm.total(),
        confusion: cm.counts,
        report: class_report(&cm)?,
    };
    write_json(&out.join(format!("metrics_{kind}.json")), &report)?;
    Ok(report)
}

/// Stratified k-fold CV over the training windows. Writes `cv_<kind>.json`
/// and `report_<kind>.json` (from the pooled out-of-fold predictions).
pub fn crossval(cfg: &Config, seed: u64, kind: ModelKind, out: &Path) -> Result<()> {
    let data = read_dataset(&out.join(TRAIN_WINDOWS))?;
    let outcome = cross_validate(&cfg.train_spec(kind, seed), &data, cfg.cv.folds, seed)?;
    write_json(&out.join(format!("cv_{kind}.json")), &outcome.result)?;
    let report = EvaluationReport {
        kind,
        count: outcome.pooled.total(),
        confusion: outcome.pooled.counts,
        report: class_report(&outcome.pooled)?,
    };
    write_json(&out.join(format!("report_{kind}.json")), &report)?;
    info!(%kind, mean = outcome.result.mean, sd = outcome.result.sd, "cross-validated");
    Ok(())
}

/// Run a window set through a model as the service would, without a
/// socket. Events go to `replay_<kind>.jsonl`; returns the typed text.
/// With `speed` the run is paced in real time, otherwise it is unpaced.
pub fn replay(model: &Path, windows: &Path, speed: Option<f64>, out: &Path) -> Result<String> {
    let artifact = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let set = Arc::new(read_windows(windows).with_context(|| format!("reading {}", windows.display()))?);
    let kind = artifact.kind();
    let mut session = ReplaySession::new(set, kind.as_str(), speed.unwrap_or(1.0))?;
    session.play();
    let mut sink = BufWriter::new(File::create(out.join(format!("replay_{kind}.jsonl")))?);
    let pace = speed.and_then(|_| session.interval());
    let mut next_due = Instant::now();
    while let Some(event) = session.emit_next(|w| artifact.predict(&w.values))? {
        write_event(&mut sink, &event)?;
        if let Some(gap) = pace {
            next_due += gap;
            std::thread::sleep(next_due.saturating_duration_since(Instant::now()));
        }
    }
    sink.flush()?;
    Ok(session.text().to_string())
}

fn write_event(sink: &mut impl Write, event: &PredictionEvent) -> Result<()> {
    serde_json::to_writer(&mut *sink, event)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Models named on the command line or in the config, for `serve`.
pub fn collect_models(cfg: &Config, out: Option<&Path>) -> Result<Vec<(String, ModelArtifact)>> {
    let mut models = Vec::new();
    for m in &cfg.serve.models {
        let artifact = load_model(&m.path).with_context(|| format!("loading model `{}`", m.id))?;
        models.push((m.id.clone(), artifact));
    }
    if let Some(dir) = out {
        for kind in ModelKind::ALL {
            let path = model_path(dir, kind);
            if path.exists() && !models.iter().any(|(id, _)| id == kind.as_str()) {
                models.push((kind.to_string(), load_model(&path)?));
            }
        }
    }
    Ok(models)
}
