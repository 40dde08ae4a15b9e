//! Trained-model artifacts and the `EEGKBD1` file format.
//!
//! Layout: the 8 magic bytes `EEGKBD1\n`, one UTF-8 JSON header line, then
//! every parameter tensor as little-endian f32 in header order. Parameters
//! are rounded to f32 when an artifact is built, so a saved file reloads to
//! exactly the in-memory model.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bigru::{BiGruArch, BiGruAttnModel};
use crate::classical::{GnbModel, SvmConfig, SvmModel};
use crate::error::{Error, Result};
use crate::eval::{Classifier, ModelSpec};
use crate::ingest::{Dataset, Standardizer};
use crate::nn::{self, History, Mlp, MlpArch, Network, TrainConfig};
use crate::{argmax, NUM_CLASSES};

pub const MAGIC: &[u8; 8] = b"EEGKBD1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gnb,
    Svm,
    Mlp,
    BigruAttn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Gnb, ModelKind::Svm, ModelKind::Mlp, ModelKind::BigruAttn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gnb => "gnb",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::BigruAttn => "bigru_attn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

/// One of the four fitted classifiers.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TrainedModel {
    Gnb(GnbModel),
    Svm(SvmModel),
    Mlp(Mlp),
    BigruAttn(BiGruAttnModel),
}

/// Infer-mode output for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    /// Per-time-step attention weights (BiGRU only).
    pub attention: Option<Vec<f64>>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gnb(_) => ModelKind::Gnb,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::BigruAttn(_) => ModelKind::BigruAttn,
        }
    }

    /// Predict from an already standardized feature vector. The linear SVM
    /// has no calibrated probabilities, so it reports a one-hot vector.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (class, probabilities, attention) = match self {
            TrainedModel::Gnb(m) => {
                let (c, p) = m.predict(x)?;
                (c, p, None)
            }
            TrainedModel::Svm(m) => {
                let c = m.predict(x)?;
                let mut p = vec![0.0; NUM_CLASSES];
                p[c] = 1.0;
                (c, p, None)
            }
            TrainedModel::Mlp(m) => {
                let p = m.probabilities(x)?;
                (argmax(&p), p, None)
            }
            TrainedModel::BigruAttn(m) => {
                let p = m.predict(x)?;
                (p.class, p.probabilities, Some(p.attention))
            }
        };
        Ok(Prediction {
            class,
            probabilities,
            attention,
        })
    }

    fn hyperparameters(&self) -> Value {
        match self {
            TrainedModel::Gnb(m) => serde_json::json!({
                "num_features": m.means[0].len(),
                "var_floor": m.var_floor,
            }),
            TrainedModel::Svm(m) => serde_json::json!({
                "num_features": m.weights[0].len(),
                "c": m.config.c,
                "epochs": m.config.epochs,
                "seed": m.config.seed,
            }),
            TrainedModel::Mlp(m) => serde_json::to_value(&m.arch).expect("arch serializes"),
            TrainedModel::BigruAttn(m) => serde_json::to_value(m.arch).expect("arch serializes"),
        }
    }

    /// Named tensors with their shapes, in file order.
    fn tensor_specs(&self) -> Vec<TensorSpec> {
        let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
        match self {
            TrainedModel::Gnb(m) => {
                let d = m.means[0].len();
                vec![
                    spec("priors".into(), vec![NUM_CLASSES]),
                    spec("means".into(), vec![NUM_CLASSES, d]),
                    spec("variances".into(), vec![NUM_CLASSES, d]),
                ]
            }
            TrainedModel::Svm(m) => vec![
                spec("weights".into(), vec![NUM_CLASSES, m.weights[0].len()]),
                spec("biases".into(), vec![NUM_CLASSES]),
            ],
            TrainedModel::Mlp(m) => m
                .layers
                .iter()
                .enumerate()
                .flat_map(|(i, l)| {
                    [
                        spec(format!("layer{i}.weights"), vec![l.weights.rows, l.weights.cols]),
                        spec(format!("layer{i}.bias"), vec![l.bias.len()]),
                    ]
                })
                .collect(),
            TrainedModel::BigruAttn(m) => {
                let (h, d) = (m.arch.hidden, m.arch.input_dim);
                let mut out = Vec::with_capacity(16);
                for dir in ["forward", "backward"] {
                    for gate in ["z", "r", "h"] {
                        out.push(spec(format!("{dir}.w_{gate}"), vec![h, h + d]));
                        out.push(spec(format!("{dir}.b_{gate}"), vec![h]));
                    }
                }
                out.push(spec("attention.weight".into(), vec![2 * h]));
                out.push(spec("attention.bias".into(), vec![1]));
                out.push(spec("head.weights".into(), vec![NUM_CLASSES, 2 * h]));
                out.push(spec("head.bias".into(), vec![NUM_CLASSES]));
                out
            }
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            TrainedModel::Gnb(m) => {
                let mut t: Vec<&[f64]> = vec![&m.priors];
                t.extend(m.means.iter().map(Vec::as_slice));
                t.extend(m.variances.iter().map(Vec::as_slice));
                t
            }
            TrainedModel::Svm(m) => {
                let mut t: Vec<&[f64]> = m.weights.iter().map(Vec::as_slice).collect();
                t.push(&m.biases);
                t
            }
            TrainedModel::Mlp(m) => m.tensors(),
            TrainedModel::BigruAttn(m) => m.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            TrainedModel::Gnb(m) => {
                let mut t: Vec<&mut [f64]> = vec![&mut m.priors];
                t.extend(m.means.iter_mut().map(Vec::as_mut_slice));
                t.extend(m.variances.iter_mut().map(Vec::as_mut_slice));
                t
            }
            TrainedModel::Svm(m) => {
                let mut t: Vec<&mut [f64]> = m.weights.iter_mut().map(Vec::as_mut_slice).collect();
                t.push(&mut m.biases);
                t
            }
            TrainedModel::Mlp(m) => m.tensors_mut(),
            TrainedModel::BigruAttn(m) => m.tensors_mut(),
        }
    }

    /// Every parameter concatenated in file order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// A zero-valued model of the right shape, ready to receive blobs.
    fn skeleton(kind: ModelKind, hyper: &Value) -> Result<Self> {
        let bad = |e| Error::json("model hyperparameters", e);
        let num_features = || {
            hyper["num_features"]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::InvalidArgument("hyperparameters lack num_features".into()))
        };
        Ok(match kind {
            ModelKind::Gnb => {
                let d = num_features()?;
                TrainedModel::Gnb(GnbModel {
                    priors: vec![0.0; NUM_CLASSES],
                    means: vec![vec![0.0; d]; NUM_CLASSES],
                    variances: vec![vec![0.0; d]; NUM_CLASSES],
                    var_floor: hyper["var_floor"].as_f64().unwrap_or(0.0),
                })
            }
            ModelKind::Svm => {
                let d = num_features()?;
                let config: SvmConfig = serde_json::from_value(hyper.clone()).map_err(bad)?;
                TrainedModel::Svm(SvmModel {
                    weights: vec![vec![0.0; d]; NUM_CLASSES],
                    biases: vec![0.0; NUM_CLASSES],
                    config,
                })
            }
            ModelKind::Mlp => {
                let arch: MlpArch = serde_json::from_value(hyper.clone()).map_err(bad)?;
                TrainedModel::Mlp(Mlp::zeros(arch))
            }
            ModelKind::BigruAttn => {
                let arch: BiGruArch = serde_json::from_value(hyper.clone()).map_err(bad)?;
                TrainedModel::BigruAttn(BiGruAttnModel::zeros(arch))
            }
        })
    }
}

impl Classifier for TrainedModel {
    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict(x)?.class)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    version: u32,
    window: WindowShape,
    hyperparameters: Value,
    standardizer: Standardizer,
    tensors: Vec<TensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    #[serde(rename = "T")]
    pub n_times: usize,
    #[serde(rename = "C")]
    pub n_channels: usize,
}

impl WindowShape {
    pub fn len(&self) -> usize {
        self.n_times * self.n_channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fitted model together with the standardizer it was trained behind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: TrainedModel,
    pub standardizer: Standardizer,
    pub window: WindowShape,
    /// Free-form metadata, e.g. held-out accuracy.
    pub meta: Option<Value>,
}

impl ModelArtifact {
    pub fn new(mut model: TrainedModel, standardizer: Standardizer, window: WindowShape) -> Result<Self> {
        if standardizer.num_features() != window.len() {
            return Err(Error::shape(
                format!("{} standardizer features", window.len()),
                standardizer.num_features().to_string(),
            ));
        }
        model.round_to_f32();
        Ok(Self {
            model,
            standardizer,
            window,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Standardize a raw `T × C` window (time-major) and predict.
    pub fn predict(&self, raw_window: &[f64]) -> Result<Prediction> {
        if raw_window.len() != self.window.len() {
            return Err(Error::shape(
                format!("{}x{} window", self.window.n_times, self.window.n_channels),
                format!("{} values", raw_window.len()),
            ));
        }
        let x = self.standardizer.transform(raw_window)?;
        self.model.predict(&x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind(),
            version: FORMAT_VERSION,
            window: self.window,
            hyperparameters: self.model.hyperparameters(),
            standardizer: self.standardizer.clone(),
            tensors: self.model.tensor_specs(),
            meta: self.meta.clone(),
        };
        let mut out = MAGIC.to_vec();
        serde_json::to_writer(&mut out, &header).expect("header serializes");
        out.push(b'\n');
        for t in self.model.tensors() {
            for &v in t {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(Error::Truncated(format!("{} bytes, shorter than the magic", bytes.len())));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        let rest = &bytes[MAGIC.len()..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Truncated("header line is not terminated".into()))?;
        let raw: Value = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::json("model header", e))?;
        // check the version before the rest of the schema
        let version = raw["version"].as_u64().unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| Error::json("model header", e))?;
        let blob = &rest[nl + 1..];

        let mut model = TrainedModel::skeleton(header.kind, &header.hyperparameters)?;
        let expected_specs = model.tensor_specs();
        if expected_specs != header.tensors {
            return Err(Error::shape(
                format!("{:?}", expected_specs.iter().map(|t| &t.shape).collect::<Vec<_>>()),
                format!("{:?}", header.tensors.iter().map(|t| &t.shape).collect::<Vec<_>>()),
            ));
        }
        let declared: usize = header.tensors.iter().map(TensorSpec::len).sum();
        if blob.len() != declared * 4 {
            return Err(Error::LengthMismatch {
                what: "parameter blob bytes".into(),
                expected: declared * 4,
                found: blob.len(),
            });
        }
        let mut values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
        if header.standardizer.num_features() != header.window.len()
            || header.standardizer.stds.len() != header.window.len()
        {
            return Err(Error::LengthMismatch {
                what: "standardizer".into(),
                expected: header.window.len(),
                found: header.standardizer.num_features(),
            });
        }
        Ok(Self {
            model,
            standardizer: header.standardizer,
            window: header.window,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    artifact.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    ModelArtifact::load(path)
}

/// How to fit one model kind on standardized windows.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainSpec {
    Gnb,
    Svm(SvmConfig),
    Mlp { hidden: Vec<usize>, config: TrainConfig },
    BigruAttn { hidden: usize, config: TrainConfig },
}

impl TrainSpec {
    /// The defaults for each kind, with `seed` applied everywhere it matters.
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Gnb => TrainSpec::Gnb,
            ModelKind::Svm => TrainSpec::Svm(SvmConfig {
                seed,
                ..SvmConfig::default()
            }),
            ModelKind::Mlp => TrainSpec::Mlp {
                hidden: vec![256, 128, 64],
                config: TrainConfig {
                    seed,
                    ..TrainConfig::default()
                },
            },
            ModelKind::BigruAttn => TrainSpec::BigruAttn {
                hidden: BiGruArch::default().hidden,
                config: TrainConfig {
                    seed,
                    ..crate::bigru::bigru_train_config()
                },
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainSpec::Gnb => ModelKind::Gnb,
            TrainSpec::Svm(_) => ModelKind::Svm,
            TrainSpec::Mlp { .. } => ModelKind::Mlp,
            TrainSpec::BigruAttn { .. } => ModelKind::BigruAttn,
        }
    }

    /// Fit on standardized data. Neural kinds also return their history.
    pub fn fit_with_history(&self, train: &Dataset) -> Result<(TrainedModel, Option<History>)> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        Ok(match self {
            TrainSpec::Gnb => (TrainedModel::Gnb(GnbModel::fit(train)?), None),
            TrainSpec::Svm(cfg) => (TrainedModel::Svm(SvmModel::fit(train, *cfg)?), None),
            TrainSpec::Mlp { hidden, config } => {
                let arch = MlpArch {
                    input_dim: train.num_features(),
                    hidden: hidden.clone(),
                    output_dim: NUM_CLASSES,
                    dropout_rate: config.dropout_rate,
                };
                let (net, hist) = nn::train(Mlp::new(arch, config.seed), train, config)?;
                (TrainedModel::Mlp(net), Some(hist))
            }
            TrainSpec::BigruAttn { hidden, config } => {
                let (_, channels) = train.shape().ok_or(Error::Empty("training set"))?;
                let arch = BiGruArch {
                    input_dim: channels,
                    hidden: *hidden,
                    dropout_rate: config.dropout_rate,
                };
                let (net, hist) = crate::bigru::train_bigru(train, arch, config)?;
                (TrainedModel::BigruAttn(net), Some(hist))
            }
        })
    }
}

impl ModelSpec for TrainSpec {
    type Model = TrainedModel;

    fn fit(&self, train: &Dataset) -> Result<TrainedModel> {
        Ok(self.fit_with_history(train)?.0)
    }
}
