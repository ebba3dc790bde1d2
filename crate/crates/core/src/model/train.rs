//! Mini-batch training with warmup/decay, and argmax prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::Real;
use super::optim::{adam_step, AdamState};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::EncodedInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// The published fine-tuning setting.
    Paper,
    /// Settings that train a from-scratch encoder on synthetic data.
    Desk,
    Custom,
}

impl Profile {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Paper => TrainConfig { epochs: 3, learning_rate: 3e-5, batch_size: 32, ..TrainConfig::default() },
            Profile::Desk | Profile::Custom => TrainConfig::default(),
        }
    }

    /// Sequence budget tied to the profile.
    pub fn max_tokens(self) -> usize {
        128
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, learning_rate: 3e-4, batch_size: 32, warmup_fraction: 0.1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not a finite non-negative number", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup fraction {} outside [0, 1]", self.warmup_fraction)));
        }
        Ok(())
    }
}

/// Learning rate at 1-based `step` of `total`: linear warmup then linear decay to 0.
pub fn scheduled_lr(base: f64, step: usize, total: usize, warmup_fraction: f64) -> f64 {
    let warmup = (warmup_fraction * total as f64).ceil() as usize;
    if step <= warmup {
        base * step as f64 / warmup as f64
    } else {
        base * (total - step) as f64 / (total - warmup) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// Trains `params` in place on `(input, label)` examples.
pub fn train(params: &mut ModelParams<f32>, examples: &[(EncodedInput, usize)], config: &TrainConfig) -> Result<TrainLog> {
    train_with(params, examples, config, |_, _| {})
}

/// [`train`] with a callback after each epoch, given the epoch's log and
/// the parameters as they stand at its end.
pub fn train_with(
    params: &mut ModelParams<f32>,
    examples: &[(EncodedInput, usize)],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams<f32>),
) -> Result<TrainLog> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("training fold has no examples".into()));
    }
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch: Vec<(&EncodedInput, usize)> = chunk.iter().map(|&i| (&examples[i].0, examples[i].1)).collect();
            let (loss, grad) = params.loss_and_grad(&batch, Some(&mut rng))?;
            loss_sum += loss as f64;
            let lr = scheduled_lr(config.learning_rate, step, total, config.warmup_fraction);
            adam_step(&mut params.data, &grad, &mut state, lr)?;
        }
        if params.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite parameters after epoch {epoch}")));
        }
        let entry = EpochLog { epoch, mean_loss: loss_sum / steps_per_epoch as f64, steps: steps_per_epoch };
        on_epoch(&entry, params);
        log.epochs.push(entry);
    }
    Ok(log)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

const PREDICT_CHUNK: usize = 64;

/// Mean logits over each instance's windows (a single window is the
/// usual case).
pub fn predict_logits<T: Real>(params: &ModelParams<T>, instances: &[Vec<EncodedInput>]) -> Result<Vec<Vec<T>>> {
    let flat: Vec<&EncodedInput> = instances.iter().flatten().collect();
    if instances.iter().any(Vec::is_empty) {
        return Err(Error::Shape("instance without any encoded window".into()));
    }
    let mut logits = Vec::with_capacity(flat.len());
    for chunk in flat.chunks(PREDICT_CHUNK) {
        logits.extend(params.logits_batch(chunk)?);
    }
    let c = params.config().n_classes;
    let mut out = Vec::with_capacity(instances.len());
    let mut next = 0;
    for windows in instances {
        let mut mean = vec![T::zero(); c];
        for row in &logits[next..next + windows.len()] {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m = *m + *v);
        }
        let inv = T::from_f64(1.0 / windows.len() as f64);
        mean.iter_mut().for_each(|m| *m = *m * inv);
        next += windows.len();
        out.push(mean);
    }
    Ok(out)
}

pub fn predict<T: Real>(params: &ModelParams<T>, instances: &[Vec<EncodedInput>]) -> Result<Vec<usize>> {
    Ok(predict_logits(params, instances)?.iter().map(|l| argmax(l)).collect())
}
