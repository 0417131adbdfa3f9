//! The epoch loop.
//!
//! Randomness per epoch `e` (0-based) comes from two derived streams:
//! `Rng::derive(seed, Shuffle, e)` orders the clips and
//! `Rng::derive(seed, Dropout, e)` draws every dropout mask of the epoch in
//! step order. Initialization uses `Rng::derive(seed, Init, 0)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamState, DEFAULT_LR};
use super::loss::bce_batch;
use crate::data::{epoch_order, multi_hot, stack_features, Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{save_weights_file, stack_z, ArchSpec, MultiLevelModel, DEFAULT_HIDDEN_UNITS};
use crate::nn::{Mode, Tensor2, DEFAULT_DROPOUT_RATE};
use crate::rng::{Rng, Stream};

/// Clips scored per inference call.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: String,
    pub hidden_units: usize,
    pub batch_size: usize,
    /// `0` is a dry run: losses are computed and logged but the model,
    /// batch-norm statistics included, is never modified.
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Evaluations without a new best valid mAP before stopping; `0` disables
    /// early stopping.
    pub early_stop_patience: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: "2-A-1-A".into(),
            hidden_units: DEFAULT_HIDDEN_UNITS,
            batch_size: 500,
            lr: DEFAULT_LR,
            epochs: 50,
            seed: 0,
            eval_every: 1,
            early_stop_patience: 10,
            dropout: DEFAULT_DROPOUT_RATE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn spec(&self, n_classes: usize) -> Result<ArchSpec> {
        ArchSpec::parse(&self.arch, self.hidden_units, n_classes)
    }

    /// A freshly initialized model for this configuration.
    pub fn build_model(&self, feature_dim: usize, n_classes: usize) -> Result<MultiLevelModel> {
        self.validate()?;
        MultiLevelModel::build(self.spec(n_classes)?, feature_dim, self.seed)
            .with_dropout(self.dropout)
    }
}

/// One line of the training log. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    #[serde(rename = "valid_mAP")]
    pub valid_map: Option<f64>,
    #[serde(rename = "valid_AUC")]
    pub valid_auc: Option<f64>,
    pub valid_dprime: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-by-valid-mAP model, or the final model when nothing was evaluated.
    pub best: MultiLevelModel,
    pub best_epoch: usize,
    pub best_report: Option<EvalReport>,
    pub final_model: MultiLevelModel,
    pub records: Vec<EpochRecord>,
    pub steps: u64,
    pub stopped_early: bool,
}

/// Final probabilities for `samples` in infer mode, `N × K`.
pub fn score_samples(model: &MultiLevelModel, samples: &[Sample]) -> Result<Tensor2> {
    let mut scores = Tensor2::zeros(samples.len(), model.n_classes());
    for (c, chunk) in samples.chunks(SCORE_CHUNK).enumerate() {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let z = stack_z(&model.predict(&stack_features(&refs)?, chunk[0].frames)?)?;
        for r in 0..z.rows() {
            scores
                .row_mut(c * SCORE_CHUNK + r)
                .copy_from_slice(z.row(r));
        }
    }
    Ok(scores)
}

pub fn evaluate_model(model: &MultiLevelModel, data: &Dataset) -> Result<EvalReport> {
    check_dims(model, data, "evaluation set")?;
    let scores = score_samples(model, &data.samples)?;
    let refs: Vec<&Sample> = data.samples.iter().collect();
    evaluate(&scores, &multi_hot(&refs, data.header.n_classes())?)
}

fn check_dims(model: &MultiLevelModel, data: &Dataset, what: &'static str) -> Result<()> {
    let (m, k) = (data.header.feature_dim(), data.header.n_classes());
    if (m, k) != (model.feature_dim(), model.n_classes()) {
        return Err(Error::shape(
            what,
            format!("M={} K={}", model.feature_dim(), model.n_classes()),
            format!("M={m} K={k}"),
        ));
    }
    if data.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn snapshot_running_stats(model: &MultiLevelModel) -> Vec<(Vec<f64>, Vec<f64>)> {
    model
        .blocks
        .iter()
        .flatten()
        .map(|l| (l.norm.running_mean.clone(), l.norm.running_var.clone()))
        .collect()
}

fn restore_running_stats(model: &mut MultiLevelModel, saved: &[(Vec<f64>, Vec<f64>)]) {
    for (layer, (mean, var)) in model.blocks.iter_mut().flatten().zip(saved) {
        layer.norm.running_mean.clone_from(mean);
        layer.norm.running_var.clone_from(var);
    }
}

/// Trains `model` on `train`, writing one JSON record per epoch to `log`.
///
/// A trailing batch with fewer than two frame rows (one clip of one frame)
/// cannot be batch-normalized and is skipped.
pub fn fit(
    mut model: MultiLevelModel,
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.spec(model.n_classes())?.block_depths != model.spec().block_depths {
        return Err(Error::SpecMismatch {
            saved: model.spec().arch_string(),
            expected: cfg.arch.clone(),
        });
    }
    check_dims(&model, train, "training set")?;
    if let Some(v) = valid {
        check_dims(&model, v, "validation set")?;
    }
    let frozen_stats = (cfg.lr == 0.0).then(|| snapshot_running_stats(&model));
    let targets_k = model.n_classes();
    let mut adam = AdamState::new(cfg.lr);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(MultiLevelModel, usize, EvalReport)> = None;
    let mut since_best = 0;
    let mut steps = 0u64;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let mut shuffle = Rng::derive(cfg.seed, Stream::Shuffle, epoch as u64);
        let mut dropout = Rng::derive(cfg.seed, Stream::Dropout, epoch as u64);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for batch in epoch_order(train.samples.len(), cfg.batch_size, &mut shuffle)? {
            let clips: Vec<&Sample> = batch.iter().map(|&i| &train.samples[i]).collect();
            let frames = clips[0].frames;
            if clips.len() * frames < 2 {
                continue;
            }
            let x = stack_features(&clips)?;
            let y = multi_hot(&clips, targets_k)?;
            let preds = model.forward(&x, frames, Mode::Train, &mut dropout)?;
            let (loss, grad_z) = bce_batch(&stack_z(&preds)?, &y)?;
            let grads = model.backward(&grad_z)?;
            match &frozen_stats {
                Some(saved) => restore_running_stats(&mut model, saved),
                None => adam.step(&mut model, &grads)?,
            }
            steps += 1;
            loss_sum += loss * clips.len() as f64;
            seen += clips.len();
        }

        let mut record = EpochRecord {
            epoch: epoch + 1,
            step: steps,
            train_loss: if seen > 0 {
                loss_sum / seen as f64
            } else {
                f64::NAN
            },
            valid_map: None,
            valid_auc: None,
            valid_dprime: None,
        };
        let due = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        if let (Some(v), true) = (valid, due) {
            let report = evaluate_model(&model, v)?;
            record.valid_map = Some(report.map);
            record.valid_auc = Some(report.mean_auc);
            record.valid_dprime = Some(report.dprime);
            if best.as_ref().is_none_or(|(_, _, b)| report.map > b.map) {
                best = Some((model.clone(), epoch + 1, report));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        serde_json::to_writer(&mut *log, &record).map_err(std::io::Error::from)?;
        log.write_all(b"\n")?;
        records.push(record);
        if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
            stopped_early = true;
            break;
        }
    }
    log.flush()?;

    let epochs_run = records.len();
    let (best_model, best_epoch, best_report) = match best {
        Some((m, e, r)) => (m, e, Some(r)),
        None => (model.clone(), epochs_run, None),
    };
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        best_report,
        final_model: model,
        records,
        steps,
        stopped_early,
    })
}

/// Metrics snapshot stored next to a checkpoint.
#[derive(Debug, Clone, Serialize)]
pub struct CheckpointMetrics<'a> {
    pub arch: String,
    pub epoch: usize,
    pub steps: u64,
    pub report: Option<&'a EvalReport>,
}

/// Writes `model.wlam` and `metrics.json` for the best model into `dir`.
pub fn save_checkpoint(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_weights_file(&outcome.best, dir.join("model.wlam"))?;
    let snapshot = CheckpointMetrics {
        arch: outcome.best.spec().arch_string(),
        epoch: outcome.best_epoch,
        steps: outcome.steps,
        report: outcome.best_report.as_ref(),
    };
    let text = serde_json::to_string_pretty(&snapshot).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("metrics.json"), text + "\n")?;
    Ok(())
}
