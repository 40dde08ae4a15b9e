//! Gaussian naive Bayes and one-vs-rest linear SVM over flattened windows.

mod gnb;
mod svm;

pub use gnb::{GnbModel, GNB_VAR_SMOOTHING};
pub use svm::{svm_objective, SvmConfig, SvmModel};
