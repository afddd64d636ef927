//! Linear probing of frozen features: a single affine layer trained with
//! softmax cross-entropy and AdamW.
//!
//! Parameters are stored in `f32`; dot products, softmax and loss reductions
//! accumulate in `f64` and are rounded once.

mod adamw;
mod train;

use rayon::prelude::*;

pub use adamw::{adamw_step, adamw_update, AdamWConfig, OptimizerState};
pub use train::{train, EpochMetrics, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::store::{FeatureMatrix, LabelVector};

/// Smallest probability fed to the logarithm in the loss.
pub const LOG_FLOOR: f64 = 1e-12;

/// Linear classifier `logits = W x + b` with `W` of shape `[C, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    num_classes: usize,
    dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ProbeModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::from_parts(num_classes, dim, vec![0.0; num_classes * dim], vec![0.0; num_classes])
    }

    pub fn from_parts(num_classes: usize, dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "probe must have C, D >= 1, got C={num_classes} D={dim}"
            )));
        }
        if weights.len() != num_classes * dim || bias.len() != num_classes {
            return Err(Error::Shape(format!(
                "probe C={num_classes} D={dim} needs {} weights and {num_classes} biases, got {} and {}",
                num_classes * dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("probe parameters must be finite".into()));
        }
        Ok(Self {
            num_classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.weights, &mut self.bias)
    }

    fn check_dim(&self, feature_dim: usize, len: usize) -> Result<usize> {
        if feature_dim != self.dim {
            return Err(Error::Shape(format!(
                "feature dimension {feature_dim} does not match probe dimension {}",
                self.dim
            )));
        }
        if !len.is_multiple_of(self.dim) {
            return Err(Error::Shape(format!(
                "feature buffer of length {len} is not a multiple of D={}",
                self.dim
            )));
        }
        Ok(len / self.dim)
    }

    fn logits_row(&self, x: &[f32], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            let dot: f64 = w.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum();
            *o = dot + self.bias[c] as f64;
        }
    }

    /// Logits `[B, C]` for a row-major `[B, D]` batch.
    pub fn forward(&self, features: &[f32], feature_dim: usize) -> Result<Vec<f32>> {
        let batch = self.check_dim(feature_dim, features.len())?;
        let mut out = Vec::with_capacity(batch * self.num_classes);
        let mut row = vec![0.0f64; self.num_classes];
        for x in features.chunks_exact(self.dim) {
            self.logits_row(x, &mut row);
            out.extend(row.iter().map(|&v| v as f32));
        }
        Ok(out)
    }
}

fn softmax_f64(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Max-subtracted softmax of one logit vector.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(Error::Input("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax input contains non-finite values".into()));
    }
    let l: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    let mut p = vec![0.0; l.len()];
    softmax_f64(&l, &mut p);
    Ok(p.into_iter().map(|v| v as f32).collect())
}

fn check_labels(labels: &[i64], num_classes: usize) -> Result<()> {
    if let Some((i, &l)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l < 0 || l as usize >= num_classes)
    {
        return Err(Error::Input(format!(
            "label {l} at index {i} is outside 0..{num_classes}"
        )));
    }
    Ok(())
}

/// Mean of `-ln p[label]` over a row-major `[B, C]` probability batch, with
/// the logarithm's argument floored at [`LOG_FLOOR`].
pub fn cross_entropy(probs: &[f32], num_classes: usize, labels: &[i64]) -> Result<f32> {
    if num_classes == 0 || probs.len() != labels.len() * num_classes || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} probabilities do not form {} rows of {num_classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    check_labels(labels, num_classes)?;
    let total: f64 = probs
        .chunks_exact(num_classes)
        .zip(labels)
        .map(|(p, &y)| -(p[y as usize] as f64).max(LOG_FLOOR).ln())
        .sum();
    Ok((total / labels.len() as f64) as f32)
}

/// Per-example loss from logits via log-sum-exp, clamped like [`cross_entropy`].
fn example_loss(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    (lse - logits[label]).min(-LOG_FLOOR.ln())
}

/// Mean cross-entropy of the model on a batch, computed from logits.
///
/// For the zero model this is exactly `ln C` after rounding to `f32`.
pub fn mean_loss(model: &ProbeModel, features: &[f32], feature_dim: usize, labels: &[i64]) -> Result<f32> {
    let batch = model.check_dim(feature_dim, features.len())?;
    if batch != labels.len() || batch == 0 {
        return Err(Error::Shape(format!(
            "{batch} feature rows but {} labels",
            labels.len()
        )));
    }
    check_labels(labels, model.num_classes)?;
    let mut logits = vec![0.0f64; model.num_classes];
    let mut total = 0.0f64;
    for (x, &y) in features.chunks_exact(model.dim).zip(labels) {
        model.logits_row(x, &mut logits);
        total += example_loss(&logits, y as usize);
    }
    Ok((total / batch as f64) as f32)
}

/// Gradients of [`mean_loss`] with respect to `W` (`[C, D]`) and `b` (`[C]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .map(|&g| g as f64 * g as f64)
            .sum::<f64>()
            .sqrt()
    }
}

/// Mean batch loss and its analytic gradient:
/// `dW = (1/B) Σ (p_i − y_i) ⊗ x_i`, `db = (1/B) Σ (p_i − y_i)`.
pub fn loss_and_gradient(
    model: &ProbeModel,
    features: &[f32],
    feature_dim: usize,
    labels: &[i64],
) -> Result<(f32, Gradients)> {
    let batch = model.check_dim(feature_dim, features.len())?;
    if batch != labels.len() || batch == 0 {
        return Err(Error::Shape(format!(
            "{batch} feature rows but {} labels",
            labels.len()
        )));
    }
    check_labels(labels, model.num_classes)?;
    let (c, d) = (model.num_classes, model.dim);
    let mut gw = vec![0.0f64; c * d];
    let mut gb = vec![0.0f64; c];
    let mut logits = vec![0.0f64; c];
    let mut probs = vec![0.0f64; c];
    let mut total = 0.0f64;
    for (x, &y) in features.chunks_exact(d).zip(labels) {
        model.logits_row(x, &mut logits);
        total += example_loss(&logits, y as usize);
        softmax_f64(&logits, &mut probs);
        probs[y as usize] -= 1.0;
        for (k, &delta) in probs.iter().enumerate() {
            gb[k] += delta;
            let row = &mut gw[k * d..(k + 1) * d];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += delta * xi as f64;
            }
        }
    }
    let scale = 1.0 / batch as f64;
    Ok((
        (total * scale) as f32,
        Gradients {
            weights: gw.into_iter().map(|g| (g * scale) as f32).collect(),
            bias: gb.into_iter().map(|g| (g * scale) as f32).collect(),
        },
    ))
}

pub fn gradient(model: &ProbeModel, features: &[f32], feature_dim: usize, labels: &[i64]) -> Result<Gradients> {
    loss_and_gradient(model, features, feature_dim, labels).map(|(_, g)| g)
}

/// Fraction of rows whose label is among the `k` largest logits. Ties rank
/// the lower class index first.
pub fn topk_accuracy(model: &ProbeModel, features: &FeatureMatrix, labels: &LabelVector, k: usize) -> Result<f64> {
    let c = model.num_classes;
    if k == 0 || k > c {
        return Err(Error::Input(format!("k must be in 1..={c}, got {k}")));
    }
    model.check_dim(features.dim(), features.data().len())?;
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    check_labels(labels.labels(), c)?;
    let hits: usize = (0..features.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0f64; c],
            |logits, i| {
                model.logits_row(features.row(i), logits);
                let y = labels.labels()[i] as usize;
                let target = logits[y];
                let rank = logits
                    .iter()
                    .enumerate()
                    .filter(|&(j, &l)| l > target || (l == target && j < y))
                    .count();
                (rank < k) as usize
            },
        )
        .sum();
    Ok(hits as f64 / features.rows() as f64)
}
