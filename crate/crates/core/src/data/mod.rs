//! Weakly labelled clips: storage, synthetic generation and batching.

mod batch;
mod format;
mod synth;

pub use batch::{batch_iter, epoch_order, multi_hot, stack_features};
pub use format::{
    read_dataset, write_dataset, Dataset, DatasetHeader, DATASET_MAGIC, DATASET_VERSION,
    HEADER_BYTES,
};
pub use synth::{generate_synthetic, ClassEvents, SynthConfig, SynthTruth, Synthetic};

/// One clip: a `frames × feature_dim` matrix and the classes present in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub frames: usize,
    pub feature_dim: usize,
    /// Row-major, frame `t` at `t * feature_dim..(t + 1) * feature_dim`.
    pub features: Vec<f32>,
    /// Strictly increasing class indices.
    pub labels: Vec<usize>,
}

impl Sample {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.features[t * self.feature_dim..(t + 1) * self.feature_dim]
    }
}
