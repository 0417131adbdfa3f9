//! Loss, optimizer and the training loop.

mod adam;
mod fit;
mod loss;

pub use adam::{AdamState, BETA1, BETA2, DEFAULT_LR, EPSILON};
pub use fit::{
    evaluate_model, fit, save_checkpoint, score_samples, CheckpointMetrics, EpochRecord,
    TrainConfig, TrainOutcome,
};
pub use loss::{bce_batch, bce_loss, CLAMP_EPS};
