use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adamw_step, loss_and_gradient, topk_accuracy, AdamWConfig, OptimizerState, ProbeModel};
use crate::error::{Error, Result};
use crate::store::{FeatureMatrix, LabelVector};

/// Probe training hyperparameters. Defaults: 10 epochs, batch 128, lr 1e-3,
/// AdamW betas (0.9, 0.999), eps 1e-8, no weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Input("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Input("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Input("AdamW betas must lie in [0, 1)".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Input(
                "eps must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Example-weighted mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_top1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ProbeModel,
    pub history: Vec<EpochMetrics>,
}

/// Trains a zero-initialised probe with seeded mini-batch AdamW. The last
/// partial batch of each epoch is kept. Output is bit-deterministic in
/// `(data, config)`.
pub fn train(
    features: &FeatureMatrix,
    labels: &LabelVector,
    val: Option<(&FeatureMatrix, &LabelVector)>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = features.rows();
    if n == 0 || labels.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if n != labels.len() {
        return Err(Error::Input(format!("{n} feature rows but {} labels", labels.len())));
    }
    let c = labels.num_classes();
    if c < 2 {
        return Err(Error::Input(format!("need at least 2 classes, got {c}")));
    }
    if let Some((vf, vl)) = val {
        if vf.dim() != features.dim() || vf.rows() != vl.len() {
            return Err(Error::Input(
                "validation set shape does not match the training set".into(),
            ));
        }
    }

    let d = features.dim();
    let mut model = ProbeModel::zeros(c, d)?;
    let mut state = OptimizerState::new(&model);
    let adamw = config.adamw();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x: Vec<f32> = Vec::with_capacity(config.batch_size * d);
    let mut batch_y: Vec<i64> = Vec::with_capacity(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(features.row(i));
                batch_y.push(labels.labels()[i]);
            }
            let (loss, grads) = loss_and_gradient(&model, &batch_x, d, &batch_y)?;
            loss_sum += loss as f64 * chunk.len() as f64;
            adamw_step(&mut model, &mut state, &grads, &adamw)?;
        }
        if model.weights().iter().chain(model.bias()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        let val_top1 = match val {
            Some((vf, vl)) => Some(topk_accuracy(&model, vf, &relabel(vl, c)?, 1)?),
            None => None,
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            val_top1,
        };
        log::info!(
            "epoch {}: train loss {:.6}{}",
            metrics.epoch,
            metrics.train_loss,
            metrics
                .val_top1
                .map(|a| format!(", val top-1 {a:.4}"))
                .unwrap_or_default()
        );
        history.push(metrics);
    }
    Ok(TrainOutcome { model, history })
}

/// Validation labels may infer fewer classes than the training set.
fn relabel(labels: &LabelVector, num_classes: usize) -> Result<LabelVector> {
    if labels.num_classes() == num_classes {
        return Ok(labels.clone());
    }
    LabelVector::new(labels.labels().to_vec(), num_classes)
}
