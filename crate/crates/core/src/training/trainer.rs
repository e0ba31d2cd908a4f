use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluation::{basic_metrics, confusion_at_threshold, DECISION_THRESHOLD};
use crate::geometry::PyramidScale;
use crate::kitti_io::Sample;
use crate::network::{save_checkpoint, FusionNet};

use super::log::{MetricLog, MetricRecord, Split};
use super::loss::{label_tensors, masked_cross_entropy};
use super::optimizer::optimizer_for;
use super::{prepare_sample, PreparedSample, TrainConfig, TrainError};

/// File names inside a training output directory.
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.safetensors";
pub const FINAL_CHECKPOINT: &str = "final.safetensors";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<MetricRecord>,
    pub steps: u64,
    pub best_val_iou: Option<f64>,
    pub best_checkpoint: Option<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainOutcome {
    pub fn train_losses(&self) -> Vec<f64> {
        self.log
            .iter()
            .filter(|r| r.split == Split::Train)
            .filter_map(|r| r.loss)
            .collect()
    }
}

/// Prepares every annotated sample at the training geometry.
pub fn prepare_all(samples: &[Sample], config: &TrainConfig) -> Result<Vec<PreparedSample>, TrainError> {
    samples
        .iter()
        .map(|s| {
            if s.ground_truth.is_none() {
                return Err(TrainError::MissingField {
                    id: s.id.clone(),
                    field: "ground truth",
                });
            }
            prepare_sample(s, config.target_size, &PyramidScale::DEFAULT, config.d_max, config.densify.as_ref())
        })
        .collect()
}

/// Trains `net` in place on raw samples. See [`train_prepared`].
pub fn train(
    net: &FusionNet,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let train = prepare_all(train_set, config)?;
    let val = prepare_all(val_set, config)?;
    train_prepared(net, &train, &val, config, out_dir)
}

/// Epochs of shuffled minibatch SGD with random flips. Validation IoU and
/// accuracy at threshold 0.5 are logged every `val_every` epochs and after
/// the last one. With `out_dir`, writes the metric log, the best-validation
/// checkpoint and the final checkpoint there.
pub fn train_prepared(
    net: &FusionNet,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut log = match out_dir {
        Some(dir) => MetricLog::to_file(&dir.join(METRICS_FILE))?,
        None => MetricLog::in_memory(),
    };
    let mut optimizer = optimizer_for(net, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0u64;
    let mut best_val_iou: Option<f64> = None;
    let mut best_checkpoint = None;
    let budget_left = |step: u64| config.max_steps.is_none_or(|m| step < m);

    for epoch in 0..config.epochs {
        if !budget_left(step) {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if !budget_left(step) {
                break;
            }
            let batch: Vec<PreparedSample> = chunk
                .iter()
                .map(|&i| {
                    let s = if rng.random::<f64>() < config.flip_prob {
                        train_set[i].flipped()
                    } else {
                        train_set[i].clone()
                    };
                    if config.zero_lidar {
                        s.without_lidar()
                    } else {
                        s
                    }
                })
                .collect();
            let loss = train_step(net, &mut optimizer, &batch, step + 1)?;
            step += 1;
            log.push(MetricRecord {
                step,
                epoch,
                split: Split::Train,
                loss: Some(loss),
                iou: None,
                accuracy: None,
            })?;
        }
        let last = epoch + 1 == config.epochs || !budget_left(step);
        if !val_set.is_empty() && ((epoch + 1) % config.val_every == 0 || last) {
            let val: Vec<PreparedSample> = if config.zero_lidar {
                val_set.iter().map(PreparedSample::without_lidar).collect()
            } else {
                val_set.to_vec()
            };
            let counts = confusion_at_threshold(net, &val, DECISION_THRESHOLD, config.batch_size)?;
            let m = basic_metrics(&counts);
            log.push(MetricRecord {
                step,
                epoch,
                split: Split::Val,
                loss: None,
                iou: Some(m.iou),
                accuracy: Some(m.accuracy),
            })?;
            if best_val_iou.is_none_or(|b| m.iou > b) {
                best_val_iou = Some(m.iou);
                if let Some(dir) = out_dir {
                    let path = dir.join(BEST_CHECKPOINT);
                    save_checkpoint(net, step, &path)?;
                    best_checkpoint = Some(path);
                }
            }
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join(FINAL_CHECKPOINT);
            save_checkpoint(net, step, &path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        log: log.into_records(),
        steps: step,
        best_val_iou,
        best_checkpoint,
        final_checkpoint,
    })
}

/// Forward, loss, backward and one optimizer update; returns the loss.
fn train_step(
    net: &FusionNet,
    optimizer: &mut super::Sgd,
    batch: &[PreparedSample],
    step: u64,
) -> Result<f64, TrainError> {
    let images: Vec<_> = batch.iter().map(|s| &s.image).collect();
    let pyramids: Vec<_> = batch.iter().map(|s| &s.pyramid).collect();
    let labels = batch
        .iter()
        .map(|s| {
            s.labels.as_ref().ok_or_else(|| TrainError::MissingField {
                id: s.id.clone(),
                field: "ground truth",
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (image, lidar) = net.batch_inputs(&images, &pyramids)?;
    let (road, valid) = label_tensors(&labels, net.dtype())?;
    let out = net.forward(&image, &lidar, true)?;
    let loss = masked_cross_entropy(&out.logits, &road, &valid)?;
    let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(TrainError::NonFiniteLoss { step });
    }
    let grads = loss.backward()?;
    optimizer.step(&grads)?;
    Ok(value)
}
