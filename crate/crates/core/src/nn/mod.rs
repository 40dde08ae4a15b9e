//! Dense networks trained with backpropagation: layers, loss, Adam, the
//! training loop with early stopping, gradient checking, and the MLP.

mod adam;
mod dense;
mod gradcheck;
pub mod linalg;
mod loss;
mod mlp;
mod network;
mod train;

pub use adam::AdamState;
pub use dense::DenseLayer;
pub use gradcheck::{gradient_check, relative_error, Coverage, GradCheckReport, FD_STEP};
pub use linalg::Matrix;
pub use loss::{l2_penalty, xent_loss, PROB_FLOOR};
pub use mlp::{Mlp, MlpArch, MlpCache};
pub use network::Network;
pub use train::{check_distribution, evaluate_loss, predict_all, train, EpochRecord, History, TrainConfig};
