//! Supervised training: cross-entropy, AdamW, seeded mini-batches and
//! evaluation.

mod optim;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{labeled_patch, HsiCube, Patch, Sample};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::{MultiFormer, SampleGrad};
use crate::tensor::Real;

pub use optim::{adam_step, AdamState};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Cosine decay of the learning rate to zero over all steps.
    pub cosine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            learning_rate: 5e-4,
            weight_decay: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            cosine: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::config("eps must be positive and weight_decay non-negative"));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys that
    /// are not training settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::config(format!("invalid value {value:?} for {key}"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        let real = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "epochs" => self.epochs = int()?,
            "batch_size" => self.batch_size = int()?,
            "learning_rate" => self.learning_rate = real()?,
            "weight_decay" => self.weight_decay = real()?,
            "beta1" => self.beta1 = real()?,
            "beta2" => self.beta2 = real()?,
            "eps" => self.eps = real()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "checkpoint_every" => self.checkpoint_every = int()?,
            "cosine" => {
                self.cosine = match value {
                    "true" | "1" | "yes" | "on" => true,
                    "false" | "0" | "no" | "off" => false,
                    _ => return Err(bad()),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "beta1 = {}", self.beta1);
        let _ = writeln!(s, "beta2 = {}", self.beta2);
        let _ = writeln!(s, "eps = {}", self.eps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "cosine = {}", self.cosine);
        s
    }

    fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.cosine && total > 0 {
            let t = step as f64 / total as f64;
            0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            self.learning_rate
        }
    }
}

/// `−log softmax(logits)[label]` for a 1-based label, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: u16) -> Result<f64> {
    let l = label as usize;
    if l == 0 || l > logits.len() {
        return Err(Error::Contract(format!("label {label} outside 1..={}", logits.len())));
    }
    let top = argmax_class(logits) as usize - 1;
    let m = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, x)| (x - m).exp())
        .sum();
    Ok(rest.ln_1p() - (logits[l - 1] - m))
}

/// Index of the largest logit plus one; ties go to the lowest class.
pub fn argmax_class<T: Real>(logits: &[T]) -> u16 {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best as u16 + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Running accuracy over the epoch's training batches.
    pub train_acc: f64,
    pub test_oa: Option<f64>,
}

impl EpochStats {
    /// `epoch\tloss\ttrain_acc[\ttest_OA]`
    pub fn log_line(&self) -> String {
        let mut s = format!("{}\t{:.6}\t{:.4}", self.epoch, self.loss, self.train_acc);
        if let Some(oa) = self.test_oa {
            let _ = write!(s, "\t{oa:.4}");
        }
        s
    }
}

fn patches(cube: &HsiCube, samples: &[Sample], s: usize) -> Result<Vec<Patch>> {
    samples.iter().map(|x| labeled_patch(cube, x, s)).collect()
}

/// Per-sample results and the batch-mean gradient per parameter tensor.
type BatchGrads = (Vec<SampleGrad<f32>>, Vec<Vec<f32>>);

/// Per-sample gradients of a batch, summed in batch order.
fn batch_gradients(model: &MultiFormer<f32>, batch: &[&Patch]) -> Result<BatchGrads> {
    let per_sample: Vec<SampleGrad<f32>> = batch
        .par_iter()
        .map(|p| model.loss_and_grads(p))
        .collect::<Result<_>>()?;
    let mut total: Vec<Vec<f32>> = model.params().iter().map(|t| vec![0.0; t.numel()]).collect();
    for sg in &per_sample {
        for (acc, g) in total.iter_mut().zip(&sg.grads) {
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
    let scale = 1.0 / batch.len() as f32;
    total.iter_mut().flatten().for_each(|g| *g *= scale);
    Ok((per_sample, total))
}

/// Trains `model` in place. `on_epoch` runs after every epoch with that
/// epoch's statistics and the updated model.
pub fn train<F>(
    model: &mut MultiFormer<f32>,
    cube: &HsiCube,
    train_samples: &[Sample],
    test_samples: Option<&[Sample]>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &MultiFormer<f32>) -> Result<()>,
{
    cfg.validate()?;
    if train_samples.is_empty() && cfg.epochs > 0 {
        return Err(Error::config("no training samples"));
    }
    let s = model.config().patch_size;
    let train_patches = patches(cube, train_samples, s)?;
    let decay: Vec<bool> = model.specs().iter().map(|p| p.decay).collect();
    let mut state = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_patches.len()).collect();
    let steps_per_epoch = train_patches.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Patch> = chunk.iter().map(|&i| &train_patches[i]).collect();
            let (per_sample, grads) = batch_gradients(model, &batch)?;
            let batch_loss: f64 = per_sample.iter().map(|s| f64::from(s.loss)).sum();
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: batch_loss / batch.len() as f64,
                });
            }
            loss_sum += batch_loss;
            correct += per_sample
                .iter()
                .zip(&batch)
                .filter(|(s, p)| argmax_class(&s.logits) == p.label)
                .count();
            adam_step(model.params_mut(), &grads, &decay, &mut state, cfg, cfg.lr_at(step, total_steps));
            step += 1;
        }
        let n = train_patches.len() as f64;
        let test_oa = match test_samples {
            Some(t) if !t.is_empty() => Some(evaluate(model, cube, t)?.overall_accuracy()?),
            _ => None,
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
            test_oa,
        };
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}

/// Predicted class of every sample, in order.
pub fn predict<T: Real>(model: &MultiFormer<T>, cube: &HsiCube, samples: &[Sample]) -> Result<Vec<u16>> {
    let s = model.config().patch_size;
    samples
        .par_iter()
        .map(|x| {
            let p = labeled_patch(cube, x, s)?;
            Ok(argmax_class(&model.logits(&p)?))
        })
        .collect()
}

/// Confusion matrix of the model's predictions on `samples`.
pub fn evaluate<T: Real>(model: &MultiFormer<T>, cube: &HsiCube, samples: &[Sample]) -> Result<ConfusionMatrix> {
    let preds = predict(model, cube, samples)?;
    let mut cm = ConfusionMatrix::new(model.config().classes);
    for (x, p) in samples.iter().zip(preds) {
        cm.record(x.class, p)?;
    }
    Ok(cm)
}
