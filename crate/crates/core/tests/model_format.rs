use cortexkey_core::bigru::BiGruArch;
use cortexkey_core::classical::SvmConfig;
use cortexkey_core::ingest::Standardizer;
use cortexkey_core::model::{ModelArtifact, ModelKind, TrainSpec, WindowShape, MAGIC};
use cortexkey_core::nn::TrainConfig;
use cortexkey_core::synthetic::sequence_task;
use cortexkey_core::Error;

const T: usize = 6;
const C: usize = 3;

fn tiny_spec(kind: ModelKind) -> TrainSpec {
    let config = TrainConfig {
        max_epochs: 3,
        batch_size: 8,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    match kind {
        ModelKind::Gnb => TrainSpec::Gnb,
        ModelKind::Svm => TrainSpec::Svm(SvmConfig {
            epochs: 5,
            ..SvmConfig::default()
        }),
        ModelKind::Mlp => TrainSpec::Mlp {
            hidden: vec![5],
            config,
        },
        ModelKind::BigruAttn => TrainSpec::BigruAttn {
            hidden: 4,
            config,
        },
    }
}

fn artifact(kind: ModelKind) -> ModelArtifact {
    let raw = sequence_task(3, 30, T, C);
    let standardizer = Standardizer::fit(&raw).unwrap();
    let data = standardizer.apply_dataset(&raw).unwrap();
    let (model, _) = tiny_spec(kind).fit_with_history(&data).unwrap();
    ModelArtifact::new(model, standardizer, WindowShape { n_times: T, n_channels: C }).unwrap()
}

#[test]
fn every_kind_round_trips_bitwise() {
    let probe = sequence_task(99, 12, T, C);
    for kind in ModelKind::ALL {
        let a = artifact(kind);
        let b = ModelArtifact::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(b.kind(), kind);
        let pa: Vec<u64> = a.model.flat_params().iter().map(|v| v.to_bits()).collect();
        let pb: Vec<u64> = b.model.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(pa, pb, "{kind}");
        assert_eq!(a.standardizer, b.standardizer);
        for w in &probe.windows {
            assert_eq!(a.predict(&w.values).unwrap(), b.predict(&w.values).unwrap(), "{kind}");
        }
        assert_eq!(a.to_bytes(), b.to_bytes());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.eegkbd");
    let a = artifact(ModelKind::BigruAttn).with_meta(serde_json::json!({"accuracy": 0.5}));
    a.save(&path).unwrap();
    let b = ModelArtifact::load(&path).unwrap();
    assert_eq!(a, b);
    let p = b.predict(&vec![0.0; T * C]).unwrap();
    assert_eq!(p.attention.unwrap().len(), T);
}

#[test]
fn header_is_readable_json() {
    let bytes = artifact(ModelKind::Mlp).to_bytes();
    assert_eq!(&bytes[..8], MAGIC);
    let nl = bytes[8..].iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + nl]).unwrap();
    assert_eq!(header["kind"], "mlp");
    assert_eq!(header["version"], 1);
    assert_eq!(header["window"]["T"], T);
    let shapes: Vec<Vec<u64>> = header["tensors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect())
        .collect();
    assert_eq!(shapes, vec![vec![5, 18], vec![5], vec![3, 5], vec![3]]);
    let floats: u64 = shapes.iter().map(|s| s.iter().product::<u64>()).sum();
    assert_eq!((bytes.len() - 8 - nl - 1) as u64, floats * 4);
    assert_eq!(header["standardizer"]["means"].as_array().unwrap().len(), T * C);
}

#[test]
fn altered_magic_is_rejected() {
    let mut bytes = artifact(ModelKind::Gnb).to_bytes();
    bytes[..8].copy_from_slice(b"XXXXXXXX");
    assert!(matches!(ModelArtifact::from_bytes(&bytes), Err(Error::BadMagic)));
}

#[test]
fn short_blob_is_a_length_mismatch() {
    // 10x10 SVM weights would need 100 floats; give it 96
    let mut bytes = MAGIC.to_vec();
    let header = serde_json::json!({
        "kind": "svm", "version": 1, "window": {"T": 10, "C": 1},
        "hyperparameters": {"num_features": 10, "c": 0.001, "epochs": 1, "seed": 1},
        "standardizer": {"means": vec![0.0; 10], "stds": vec![1.0; 10]},
        "tensors": [{"name": "weights", "shape": [3, 10]}, {"name": "biases", "shape": [3]}],
    });
    bytes.extend(serde_json::to_vec(&header).unwrap());
    bytes.push(b'\n');
    bytes.extend(vec![0u8; 30 * 4]);
    assert!(matches!(
        ModelArtifact::from_bytes(&bytes),
        Err(Error::LengthMismatch { expected: 132, found: 120, .. })
    ));

    let full = artifact(ModelKind::Svm).to_bytes();
    assert!(matches!(
        ModelArtifact::from_bytes(&full[..full.len() - 16]),
        Err(Error::LengthMismatch { .. })
    ));
    let mut long = full.clone();
    long.extend([0u8; 4]);
    assert!(matches!(ModelArtifact::from_bytes(&long), Err(Error::LengthMismatch { .. })));
}

#[test]
fn truncated_and_unknown_version() {
    let full = artifact(ModelKind::Gnb).to_bytes();
    assert!(matches!(ModelArtifact::from_bytes(&full[..5]), Err(Error::Truncated(_))));
    assert!(matches!(ModelArtifact::from_bytes(&full[..40]), Err(Error::Truncated(_))));

    let text = String::from_utf8_lossy(&full).replacen("\"version\":1", "\"version\":7", 1);
    let mut bumped = full.clone();
    let idx = text.find("\"version\":7").unwrap();
    bumped[idx..idx + 11].copy_from_slice(b"\"version\":7");
    assert!(matches!(ModelArtifact::from_bytes(&bumped), Err(Error::UnsupportedVersion(7))));
}

#[test]
fn wrong_window_shape_is_a_shape_error() {
    let a = artifact(ModelKind::Mlp);
    assert!(matches!(a.predict(&vec![0.0; T * C - C]), Err(Error::Shape { .. })));
}

#[test]
fn bigru_hidden_is_recorded() {
    let a = artifact(ModelKind::BigruAttn);
    let b = ModelArtifact::from_bytes(&a.to_bytes()).unwrap();
    match b.model {
        cortexkey_core::model::TrainedModel::BigruAttn(m) => assert_eq!(
            m.arch,
            BiGruArch {
                input_dim: C,
                hidden: 4,
                dropout_rate: 0.2
            }
        ),
        _ => panic!("wrong kind"),
    }
}
