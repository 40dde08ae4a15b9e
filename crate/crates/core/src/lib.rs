//! Decoding keystrokes from 19-channel EEG.
//!
//! The crate covers the offline half of the stack: loading session bundles
//! and cutting onset-aligned trial windows ([`ingest`]), ERP averaging
//! ([`erp`]), the classifiers ([`classical`], [`nn`], [`bigru`]), metrics and
//! cross-validation ([`eval`]), the binary model format ([`model`]) and the
//! replay state machine that turns predictions into key events ([`replay`]).

pub mod bigru;
pub mod classical;
pub mod erp;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod replay;
pub mod synthetic;

pub mod rng;

pub use error::{Error, Result};

/// Number of decoded classes: rest, `d`, `l`.
pub const NUM_CLASSES: usize = 3;

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
