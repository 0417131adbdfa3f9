//! Attention pooling models for weakly labelled multi-label classification.
//!
//! A clip is a bag of `T` frame feature vectors carrying only clip-level
//! (weak) labels. The single-level model embeds every frame with a stack of
//! dense layers and pools per-frame class probabilities with a learned
//! attention distribution over time. The multi-level model taps several
//! embedding depths, pools each with its own attention head, concatenates the
//! level predictions and maps them to the final probabilities with one more
//! sigmoid layer.
//!
//! Modules:
//! - [`data`]: binary dataset format, synthetic bag generator, mini-batching
//! - [`nn`]: dense, ReLU, sigmoid, softmax, batch norm, dropout, gradient checks
//! - [`attention`]: the attention pooling head
//! - [`model`]: architecture strings, multi-level forward/backward, weight files
//! - [`train`]: binary cross-entropy, Adam, the epoch loop
//! - [`metrics`]: AP/mAP, AUC, d-prime and per-class reports

pub mod attention;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
