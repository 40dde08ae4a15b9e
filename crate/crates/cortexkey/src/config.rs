//! Pipeline configuration, read from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use cortexkey_core::bigru::bigru_train_config;
use cortexkey_core::classical::SvmConfig;
use cortexkey_core::ingest::{default_keep_channels, WINDOW_LEN};
use cortexkey_core::model::{ModelKind, TrainSpec};
use cortexkey_core::nn::TrainConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PORT: u16 = 8714;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid TOML in {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub svm: SvmSection,
    pub mlp: MlpSection,
    pub bigru: BiGruSection,
    pub cv: CvSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Pool every session's windows, then a stratified shuffle split.
    #[default]
    Stratified,
    /// Hold out whole sessions listed in `test_sessions`.
    Session,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Session bundle stems (`<stem>.meta.json`, `.eeg`, `.markers`).
    pub sessions: Vec<PathBuf>,
    /// Directory scanned for `*.meta.json` bundles, in name order.
    pub session_dir: Option<PathBuf>,
    pub keep_channels: Vec<String>,
    pub window_len: usize,
    pub test_fraction: f64,
    pub split: SplitMode,
    pub test_sessions: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            sessions: Vec::new(),
            session_dir: None,
            keep_channels: default_keep_channels(),
            window_len: WINDOW_LEN,
            test_fraction: 0.2,
            split: SplitMode::Stratified,
            test_sessions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmConfig::default();
        Self { c: d.c, epochs: d.epochs }
    }
}

/// Optional overrides of the shared training schedule.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub l2_lambda: Option<f64>,
    pub dropout_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub validation_fraction: Option<f64>,
    pub clip_norm: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig, seed: u64) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { base.$f = v; } )* };
        }
        set!(learning_rate, l2_lambda, dropout_rate, batch_size, max_epochs, early_stop_patience, validation_fraction);
        if self.clip_norm.is_some() {
            base.clip_norm = self.clip_norm;
        }
        base.seed = seed;
        base
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainOverrides,
}

impl Default for MlpSection {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            train: TrainOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiGruSection {
    pub hidden: usize,
    #[serde(flatten)]
    pub train: TrainOverrides,
}

impl Default for BiGruSection {
    fn default() -> Self {
        Self {
            hidden: 128,
            train: TrainOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { folds: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServedModel {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub port: u16,
    pub models: Vec<ServedModel>,
    /// Where `POST /replay` looks up `<stem>.windows.bin`.
    pub windows_dir: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            models: Vec::new(),
            windows_dir: None,
        }
    }
}

impl Config {
    /// Load by extension: `.json` is JSON, anything else TOML. Relative
    /// paths inside are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Config = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text).map_err(|source| ConfigError::Toml {
                path: path.to_path_buf(),
                source,
            })?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.data.sessions.iter_mut().for_each(fix);
        if let Some(d) = &mut self.data.session_dir {
            fix(d);
        }
        for m in &mut self.serve.models {
            fix(&mut m.path);
        }
        if let Some(d) = &mut self.serve.windows_dir {
            fix(d);
        }
    }

    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    /// Session stems from the explicit list plus any found in `session_dir`.
    pub fn session_stems(&self) -> Result<Vec<PathBuf>, ConfigError> {
        let mut stems = self.data.sessions.clone();
        if let Some(dir) = &self.data.session_dir {
            let entries = fs::read_dir(dir).map_err(|source| ConfigError::Read {
                path: dir.clone(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().into_string().ok()?;
                    name.strip_suffix(".meta.json").map(|stem| dir.join(stem))
                })
                .collect();
            found.sort();
            stems.extend(found);
        }
        if stems.is_empty() {
            return Err(ConfigError::Invalid(
                "no sessions configured: set data.sessions or data.session_dir".into(),
            ));
        }
        Ok(stems)
    }

    pub fn train_spec(&self, kind: ModelKind, seed: u64) -> TrainSpec {
        match kind {
            ModelKind::Gnb => TrainSpec::Gnb,
            ModelKind::Svm => TrainSpec::Svm(SvmConfig {
                c: self.svm.c,
                epochs: self.svm.epochs,
                seed,
            }),
            ModelKind::Mlp => TrainSpec::Mlp {
                hidden: self.mlp.hidden.clone(),
                config: self.mlp.train.apply(TrainConfig::default(), seed),
            },
            ModelKind::BigruAttn => TrainSpec::BigruAttn {
                hidden: self.bigru.hidden,
                config: self.bigru.train.apply(bigru_train_config(), seed),
            },
        }
    }
}
