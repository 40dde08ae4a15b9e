//! Hand-built models with known outputs, for demos and service tests.

use cortexkey_core::ingest::{Standardizer, TrialWindow, WindowSource};
use cortexkey_core::model::{ModelArtifact, TrainedModel, WindowShape};
use cortexkey_core::nn::{Matrix, Mlp, MlpArch};
use cortexkey_core::NUM_CLASSES;

fn linear(window: WindowShape, weights: Matrix, bias: Vec<f64>) -> ModelArtifact {
    let d = window.len();
    let mut mlp = Mlp::zeros(MlpArch {
        input_dim: d,
        hidden: Vec::new(),
        output_dim: NUM_CLASSES,
        dropout_rate: 0.0,
    });
    mlp.layers[0].weights = weights;
    mlp.layers[0].bias = bias;
    ModelArtifact::new(TrainedModel::Mlp(mlp), Standardizer::identity(d), window)
        .expect("identity standardizer matches the window")
}

/// Logits `[2, 0, 0]` for every input, so it always answers rest.
pub fn constant_stub(window: WindowShape) -> ModelArtifact {
    linear(window, Matrix::zeros(NUM_CLASSES, window.len()), vec![2.0, 0.0, 0.0])
}

/// Reads the class back from feature 0, as written by [`stub_window`]:
/// logits are `[0.5, x0, -x0]`.
pub fn perfect_stub(window: WindowShape) -> ModelArtifact {
    let d = window.len();
    let mut w = Matrix::zeros(NUM_CLASSES, d);
    w.data[d] = 1.0;
    w.data[2 * d] = -1.0;
    linear(window, w, vec![0.5, 0.0, 0.0])
}

/// A window whose first value encodes `label` (0, +2, -2) and is otherwise
/// zero.
pub fn stub_window(window: WindowShape, label: usize, index: usize) -> TrialWindow {
    let mut values = vec![0.0; window.len()];
    values[0] = match label {
        1 => 2.0,
        2 => -2.0,
        _ => 0.0,
    };
    TrialWindow::new(
        values,
        window.n_times,
        window.n_channels,
        label,
        WindowSource {
            session: "stub".into(),
            onset: index,
        },
    )
    .expect("label in range")
}
