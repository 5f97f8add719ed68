//! SGD training with a step-decayed learning rate and three-point checkpointing.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{strong_augment, AugmentParams};
use crate::error::{DistError, Result};
use crate::frames::FrameSeq;
use crate::model::{Activations, Model, ModelSpec};
use crate::sampling::{random_stratified_sample, SamplingParams};
use crate::seed::{clip_seed, SeedMixer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_gamma: f64,
    pub lr_step_every: usize,
    pub momentum: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 40,
            batch_size: 16,
            base_lr: 0.005,
            lr_gamma: 0.9,
            lr_step_every: 2,
            momentum: 0.9,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 3 {
            return Err(DistError::param("epochs", "need at least 3 epochs for three distinct checkpoints"));
        }
        if self.batch_size == 0 {
            return Err(DistError::param("batch_size", "must be positive"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(DistError::param("base_lr", "must be positive"));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma.is_finite()) {
            return Err(DistError::param("lr_gamma", "must be positive"));
        }
        if self.lr_step_every == 0 {
            return Err(DistError::param("lr_step_every", "must be positive"));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(DistError::param("momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `base_lr * gamma^floor(epoch / step_every)` for a 0-based epoch.
pub fn lr_at_epoch(schedule: &TrainSchedule, epoch: usize) -> Result<f64> {
    if epoch >= schedule.epochs {
        return Err(DistError::EpochOutOfRange {
            epoch,
            epochs: schedule.epochs,
        });
    }
    let steps = (epoch / schedule.lr_step_every) as i32;
    Ok(schedule.base_lr * schedule.lr_gamma.powi(steps))
}

/// 1-based epochs `(ceil(n/3), ceil(2n/3), n)` after which checkpoints are taken.
pub fn checkpoint_epochs(epochs: usize) -> Result<(usize, usize, usize)> {
    if epochs < 3 {
        return Err(DistError::param("epochs", "need at least 3 epochs for three distinct checkpoints"));
    }
    Ok((epochs.div_ceil(3), (2 * epochs).div_ceil(3), epochs))
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: Model,
}

/// Teacher snapshots at one, two and three thirds of training.
#[derive(Debug, Clone)]
pub struct CheckpointSet {
    entries: [Checkpoint; 3],
}

impl CheckpointSet {
    pub fn new(entries: [Checkpoint; 3]) -> Result<Self> {
        if !(entries[0].epoch < entries[1].epoch && entries[1].epoch < entries[2].epoch) {
            return Err(DistError::param("checkpoints", "epochs must be strictly increasing"));
        }
        let c = entries[0].model.num_classes();
        if entries.iter().any(|e| e.model.num_classes() != c) {
            return Err(DistError::param("checkpoints", "class counts differ between checkpoints"));
        }
        Ok(CheckpointSet { entries })
    }

    pub fn entries(&self) -> &[Checkpoint; 3] {
        &self.entries
    }

    pub fn epochs(&self) -> (usize, usize, usize) {
        (self.entries[0].epoch, self.entries[1].epoch, self.entries[2].epoch)
    }

    pub fn final_model(&self) -> &Model {
        &self.entries[2].model
    }

    pub fn num_classes(&self) -> usize {
        self.entries[2].model.num_classes()
    }

    pub fn path_for(dir: &Path, prefix: &str, epoch: usize) -> PathBuf {
        dir.join(format!("{prefix}_e{epoch}.bin"))
    }

    /// Writes `<dir>/<prefix>_e{epoch}.bin` for each snapshot.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        self.entries
            .iter()
            .map(|e| {
                let p = Self::path_for(dir, prefix, e.epoch);
                e.model.save(&p)?;
                Ok(p)
            })
            .collect()
    }

    pub fn load(dir: &Path, prefix: &str, epochs: (usize, usize, usize)) -> Result<Self> {
        let load = |epoch| -> Result<Checkpoint> {
            Ok(Checkpoint {
                epoch,
                model: Model::load(&Self::path_for(dir, prefix, epoch))?,
            })
        };
        CheckpointSet::new([load(epochs.0)?, load(epochs.1)?, load(epochs.2)?])
    }
}

/// One training pair. True and pseudo labels look identical here.
#[derive(Debug, Clone, Copy)]
pub struct TrainExample<'a> {
    pub id: &'a str,
    pub frames: &'a FrameSeq,
    pub label: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions<'a> {
    pub schedule: &'a TrainSchedule,
    pub sampling: &'a SamplingParams,
    pub augment: &'a AugmentParams,
    pub seed: u64,
    pub save_checkpoints: bool,
    pub warm_start: Option<&'a Model>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub checkpoints: Option<CheckpointSet>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

pub fn train(spec: &ModelSpec, data: &[TrainExample<'_>], opts: &TrainOptions<'_>) -> Result<TrainOutcome> {
    let schedule = opts.schedule;
    schedule.validate()?;
    opts.sampling.validate()?;
    opts.augment.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(DistError::param("data", "no training examples"));
    }
    if spec.frames != opts.sampling.target_frames {
        return Err(DistError::param(
            "target_frames",
            format!("model expects {} frames, sampler yields {}", spec.frames, opts.sampling.target_frames),
        ));
    }
    for ex in data {
        if ex.label >= spec.num_classes {
            return Err(DistError::LabelOutOfRange {
                label: ex.label,
                num_classes: spec.num_classes,
            });
        }
    }

    let mut model = match opts.warm_start {
        Some(m) => {
            if m.spec() != spec {
                return Err(DistError::param("warm_start", "warm-start model spec differs"));
            }
            m.clone()
        }
        None => Model::init(spec)?,
    };
    let n_params = model.params().len();
    let mut velocity = vec![0.0f32; n_params];
    let mut grad = vec![0.0f32; n_params];
    let mut act = Activations::default();
    let ckpt_epochs = checkpoint_epochs(schedule.epochs)?;
    let mut snapshots = Vec::with_capacity(3);
    let mut epoch_losses = Vec::with_capacity(schedule.epochs);
    let mut learning_rates = Vec::with_capacity(schedule.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..schedule.epochs {
        let lr = lr_at_epoch(schedule, epoch)? as f32;
        learning_rates.push(f64::from(lr));
        let epoch_seed = SeedMixer::new(opts.seed).str("epoch").u64(epoch as u64).finish();
        order.sort_unstable();
        order.shuffle(&mut SeedMixer::new(epoch_seed).str("shuffle").rng());

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(schedule.batch_size).enumerate() {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &data[i];
                let s = clip_seed(epoch_seed, "train-view", ex.id);
                let view = random_stratified_sample(ex.frames, opts.sampling, s)?;
                let view = strong_augment(&view, opts.augment, s.rotate_left(17))?;
                batch_loss += model.loss_and_grad(&view, ex.label, &mut act, &mut grad)?;
            }
            if !batch_loss.is_finite() {
                return Err(DistError::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f32;
            let mu = schedule.momentum as f32;
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v + g * scale;
                *p -= lr * *v;
            }
        }
        epoch_losses.push(loss_sum / data.len() as f64);
        let done = epoch + 1;
        if opts.save_checkpoints && [ckpt_epochs.0, ckpt_epochs.1, ckpt_epochs.2].contains(&done) {
            snapshots.push(Checkpoint {
                epoch: done,
                model: model.clone(),
            });
        }
        log::debug!("epoch {done}/{} lr {lr:.6} loss {:.4}", schedule.epochs, epoch_losses[epoch]);
    }

    let checkpoints = if opts.save_checkpoints {
        let arr: [Checkpoint; 3] = snapshots
            .try_into()
            .map_err(|_| DistError::param("checkpoints", "expected exactly three snapshots"))?;
        Some(CheckpointSet::new(arr)?)
    } else {
        None
    };
    Ok(TrainOutcome {
        model,
        checkpoints,
        epoch_losses,
        learning_rates,
    })
}
