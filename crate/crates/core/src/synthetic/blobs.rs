use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance between any two class means, in units of `sigma`.
    pub separation: f64,
    /// RMS distance of a point from its class mean.
    pub sigma: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(num_classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64) -> Self {
        Self {
            num_classes,
            dim,
            per_class,
            separation,
            sigma: 1.0,
            seed,
        }
    }
}

/// Isotropic Gaussian clusters with pairwise mean distance `separation * sigma`.
///
/// Class `c` is centred at `separation * sigma / sqrt(2) * e_c`, so the means
/// do not depend on the seed and sets drawn with different seeds share them.
/// Each coordinate has standard deviation `sigma / sqrt(dim)`. Rows cycle
/// through the classes: row `i` has label `i % num_classes`.
pub fn gen_blobs(spec: &BlobSpec) -> Result<(FeatureMatrix, LabelVector)> {
    let BlobSpec {
        num_classes: c,
        dim: d,
        per_class,
        separation,
        sigma,
        seed,
    } = *spec;
    if c < 2 || d < c || per_class == 0 {
        return Err(Error::Generation(format!(
            "blobs need at least 2 classes, dim >= classes and a positive count (C={c}, D={d}, n={per_class})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Generation(
            "separation must be non-negative and sigma positive".into(),
        ));
    }
    let offset = separation * sigma / std::f64::consts::SQRT_2;
    let noise = Normal::new(0.0, sigma / (d as f64).sqrt()).expect("positive scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c * per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % c;
        for j in 0..d {
            let mean = if j == class { offset } else { 0.0 };
            data.push((mean + noise.sample(&mut rng)) as f32);
        }
        labels.push(class as i64);
    }
    Ok((
        FeatureMatrix::with_sequential_ids(n, d, data)?,
        LabelVector::new(labels, c)?,
    ))
}
