//! Bidirectional GRU with additive attention pooling and a softmax head,
//! trained end to end with backpropagation through time.

mod attention;
mod cell;
mod model;

pub use attention::{attention_pool, AttentionParams};
pub use cell::{gru_cell_step, GruCellParams, StepCache};
pub use model::{
    bigru_forward, bigru_train_config, train_bigru, BiGruArch, BiGruAttnModel, BiGruParams, BiGruPrediction,
    BiGruTrace, ForwardCache,
};
