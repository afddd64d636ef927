use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Mean silhouette coefficient under Euclidean distance.
///
/// Points in singleton classes contribute 0, as do points whose `a` and `b`
/// are both zero.
pub fn silhouette(points: &[f32], dim: usize, labels: &[i64]) -> Result<f64> {
    if dim == 0 || points.len() != labels.len() * dim {
        return Err(Error::Shape(format!(
            "{} values do not form {} rows of width {dim}",
            points.len(),
            labels.len()
        )));
    }
    let mut class_index: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels {
        let next = class_index.len();
        class_index.entry(l).or_insert(next);
    }
    if class_index.len() < 2 {
        return Err(Error::Input("silhouette needs at least two classes".into()));
    }
    let k = class_index.len();
    let cls: Vec<usize> = labels.iter().map(|l| class_index[l]).collect();
    let mut sizes = vec![0usize; k];
    for &c in &cls {
        sizes[c] += 1;
    }
    let n = labels.len();
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if sizes[cls[i]] == 1 {
                return 0.0;
            }
            let xi = &points[i * dim..(i + 1) * dim];
            let mut sums = vec![0.0f64; k];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = &points[j * dim..(j + 1) * dim];
                let d2: f64 = xi.iter().zip(xj).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
                sums[cls[j]] += d2.sqrt();
            }
            let a = sums[cls[i]] / (sizes[cls[i]] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != cls[i])
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}
