use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint affinities are floored at this value off the diagonal.
pub const AFFINITY_FLOOR: f64 = 1e-12;
/// Required agreement between calibrated row entropy and `log2(perplexity)`.
pub const ENTROPY_TOLERANCE: f64 = 1e-4;
const EARLY_STOP: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const JITTER_SEED: u64 = 0x6a17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches and exaggeration ends.
    pub switch_iteration: usize,
    pub exaggeration: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            switch_iteration: 250,
            exaggeration: 12.0,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity > 1.0 && self.perplexity < n as f64 / 3.0) {
            return Err(Error::Input(format!(
                "perplexity {} must lie in (1, N/3) = (1, {:.3}) for N = {n}",
                self.perplexity,
                n as f64 / 3.0
            )));
        }
        if self.iterations < self.switch_iteration {
            return Err(Error::Config(format!(
                "iterations ({}) must be at least {}",
                self.iterations, self.switch_iteration
            )));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.exaggeration.is_nan()
            || self.exaggeration < 1.0
        {
            return Err(Error::Config(
                "learning rate must be positive and exaggeration at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Calibrated input affinities.
#[derive(Debug, Clone)]
pub struct Affinities {
    pub n: usize,
    /// Symmetric joint probabilities, row-major `[N, N]`, zero diagonal.
    pub joint: Vec<f64>,
    /// Row-conditional probabilities `p(j | i)`, row-major `[N, N]`.
    pub conditional: Vec<f64>,
    /// Gaussian precision `1 / (2 sigma^2)` per row.
    pub betas: Vec<f64>,
    /// Shannon entropy of each conditional row in bits.
    pub entropies: Vec<f64>,
    /// Whether duplicate points forced a jittered retry.
    pub jittered: bool,
}

fn squared_distances(data: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &data[i * dim..(i + 1) * dim];
            (0..n)
                .map(|j| {
                    let xj = &data[j * dim..(j + 1) * dim];
                    xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum()
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// Conditional row and its entropy in bits for precision `beta`.
fn row_distribution(dist: &[f64], skip: usize, dmin: f64, beta: f64, out: &mut [f64]) -> f64 {
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (j, &d) in dist.iter().enumerate() {
        if j == skip {
            out[j] = 0.0;
            continue;
        }
        let shifted = d - dmin;
        let w = (-beta * shifted).exp();
        out[j] = w;
        z += w;
        weighted += w * shifted;
    }
    for v in out.iter_mut() {
        *v /= z;
    }
    (z.ln() + beta * weighted / z) / std::f64::consts::LN_2
}

/// Finds `beta` for one row; returns the row, beta and entropy, or `None`
/// when the target entropy is out of reach.
fn calibrate_row(dist: &[f64], i: usize, target: f64) -> Option<(Vec<f64>, f64, f64)> {
    let n = dist.len();
    let mut row = vec![0.0; n];
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let h0 = row_distribution(dist, i, dmin, 0.0, &mut row);
    if h0 - target <= EARLY_STOP {
        return ((h0 - target).abs() <= ENTROPY_TOLERANCE).then_some((row, 0.0, h0));
    }
    let spread: f64 = dist.iter().map(|&d| d - dmin).fold(0.0, f64::max);
    if spread <= 0.0 {
        return None;
    }
    // entropy falls monotonically in beta; bracket in log space, then bisect
    let mut lo = (1.0 / spread).ln() - 40.0;
    let mut hi = lo + 40.0;
    let mut h_hi = row_distribution(dist, i, dmin, hi.exp(), &mut row);
    let mut expansions = 0;
    while h_hi > target {
        lo = hi;
        hi += 4.0;
        h_hi = row_distribution(dist, i, dmin, hi.exp(), &mut row);
        expansions += 1;
        if expansions > 200 {
            return None;
        }
    }
    let mut best = (hi, h_hi);
    for _ in 0..MAX_BISECTIONS {
        if (best.1 - target).abs() < EARLY_STOP {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let h = row_distribution(dist, i, dmin, mid.exp(), &mut row);
        if (h - target).abs() < (best.1 - target).abs() {
            best = (mid, h);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = best.0.exp();
    let h = row_distribution(dist, i, dmin, beta, &mut row);
    ((h - target).abs() <= ENTROPY_TOLERANCE).then_some((row, beta, h))
}

fn try_calibrate(data: &[f64], n: usize, dim: usize, perplexity: f64) -> Option<Affinities> {
    let dist = squared_distances(data, n, dim);
    let target = perplexity.log2();
    let rows: Vec<Option<(Vec<f64>, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(&dist[i * n..(i + 1) * n], i, target))
        .collect();
    let mut conditional = Vec::with_capacity(n * n);
    let mut betas = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for r in rows {
        let (row, beta, h) = r?;
        conditional.extend(row);
        betas.push(beta);
        entropies.push(h);
    }
    let mut joint = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                joint[i * n + j] = ((conditional[i * n + j] + conditional[j * n + i]) / denom).max(AFFINITY_FLOOR);
            }
        }
    }
    Some(Affinities {
        n,
        joint,
        conditional,
        betas,
        entropies,
        jittered: false,
    })
}

/// Per-row Gaussian bandwidths matching `perplexity`, symmetrized into joint
/// probabilities.
///
/// When coincident points make a row's target entropy unreachable, every
/// coordinate is perturbed by seeded Gaussian noise of scale `1e-6` times the
/// data's RMS magnitude and calibration is retried once.
pub fn calibrate_affinities(features: &[f32], dim: usize, perplexity: f64) -> Result<Affinities> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "{} values do not form rows of width {dim}",
            features.len()
        )));
    }
    let n = features.len() / dim;
    if n < 4 {
        return Err(Error::Input(format!("need at least 4 points, got {n}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("features contain non-finite values".into()));
    }
    if !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::Input(format!(
            "perplexity {perplexity} must lie in [1, N - 1] = [1, {}]",
            n - 1
        )));
    }
    let mut data: Vec<f64> = features.iter().map(|&v| v as f64).collect();
    if let Some(a) = try_calibrate(&data, n, dim, perplexity) {
        return Ok(a);
    }
    let rms = (data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt();
    let scale = 1e-6 * if rms > 0.0 { rms } else { 1.0 };
    log::warn!("affinity calibration failed on coincident points; retrying with jitter of scale {scale:e}");
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let noise = Normal::new(0.0, scale).expect("positive scale");
    for v in data.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    let mut a = try_calibrate(&data, n, dim, perplexity)
        .ok_or_else(|| Error::Numeric("affinity calibration failed even after jitter".into()))?;
    a.jittered = true;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    /// Row-major `[N, 2]`.
    pub points: Vec<f32>,
    pub final_kl: f64,
    /// KL divergence of the un-exaggerated affinities before each update.
    pub kl_history: Vec<f64>,
}

impl Embedding2D {
    pub fn len(&self) -> usize {
        self.points.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Student-t kernel values `1 / (1 + |yi - yj|^2)` and their off-diagonal sum.
fn kernel(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            let mut s = 0.0;
            for j in 0..n {
                if i != j {
                    let dx = y[2 * i] - y[2 * j];
                    let dy = y[2 * i + 1] - y[2 * j + 1];
                    let k = 1.0 / (1.0 + dx * dx + dy * dy);
                    row[j] = k;
                    s += k;
                }
            }
            (row, s)
        })
        .collect();
    let z = rows.iter().map(|r| r.1).sum();
    (rows.into_iter().flat_map(|r| r.0).collect(), z)
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64, n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                let qij = (num[i * n + j] / z).max(AFFINITY_FLOOR);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

fn center(y: &mut [f64], n: usize) {
    for axis in 0..2 {
        let mean = (0..n).map(|i| y[2 * i + axis]).sum::<f64>() / n as f64;
        for i in 0..n {
            y[2 * i + axis] -= mean;
        }
    }
}

/// Exact t-SNE to two dimensions.
pub fn tsne(features: &[f32], dim: usize, config: &TsneConfig) -> Result<Embedding2D> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "{} values do not form rows of width {dim}",
            features.len()
        )));
    }
    let n = features.len() / dim;
    config.validate(n)?;
    let aff = calibrate_affinities(features, dim, config.perplexity)?;
    let p = &aff.joint;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid init scale");
    let mut y: Vec<f64> = (0..2 * n).map(|_| init.sample(&mut rng)).collect();
    let mut update = vec![0.0f64; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut kl_history = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let (exaggeration, momentum) = if iter < config.switch_iteration {
            (config.exaggeration, config.initial_momentum)
        } else {
            (1.0, config.final_momentum)
        };
        let (num, z) = kernel(&y, n);
        kl_history.push(kl_divergence(p, &num, z, n));

        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let k = num[i * n + j];
                    let f = (exaggeration * p[i * n + j] - k / z) * k;
                    g[0] += f * (y[2 * i] - y[2 * j]);
                    g[1] += f * (y[2 * i + 1] - y[2 * j + 1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for (idx, g) in grad.iter().flatten().enumerate() {
            gains[idx] = if (*g > 0.0) != (update[idx] > 0.0) {
                gains[idx] + 0.2
            } else {
                (gains[idx] * 0.8).max(0.01)
            };
            update[idx] = momentum * update[idx] - config.learning_rate * gains[idx] * g;
            y[idx] += update[idx];
        }
        center(&mut y, n);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("embedding diverged at iteration {iter}")));
        }
    }

    let (num, z) = kernel(&y, n);
    let final_kl = kl_divergence(p, &num, z, n);
    Ok(Embedding2D {
        points: y.iter().map(|&v| v as f32).collect(),
        final_kl,
        kl_history,
    })
}
