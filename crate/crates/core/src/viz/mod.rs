//! Separability analysis: exact t-SNE, silhouette scores, and the optional
//! preprocessing applied before embedding.

mod silhouette;
mod svg;
mod tsne;

use nalgebra::{DMatrix, SymmetricEigen};

pub use silhouette::silhouette;
pub use svg::scatter_svg;
pub use tsne::{calibrate_affinities, tsne, Affinities, Embedding2D, TsneConfig, AFFINITY_FLOOR, ENTROPY_TOLERANCE};

use crate::error::{Error, Result};

/// Scales each row to unit length; all-zero rows are left unchanged.
pub fn l2_normalize_rows(data: &mut [f32], dim: usize) {
    for row in data.chunks_exact_mut(dim) {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
}

/// Projects centred rows onto the top `k` principal axes.
///
/// Each axis is signed so that its largest-magnitude component is positive,
/// which makes the output independent of the eigensolver's sign choice.
pub fn pca(data: &[f32], dim: usize, k: usize) -> Result<Vec<f32>> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "{} values do not form rows of width {dim}",
            data.len()
        )));
    }
    if k == 0 || k > dim {
        return Err(Error::Config(format!("PCA dimension {k} must lie in [1, {dim}]")));
    }
    let n = data.len() / dim;
    if n < 2 {
        return Err(Error::Input("PCA needs at least two rows".into()));
    }
    let x = DMatrix::from_fn(n, dim, |i, j| data[i * dim + j] as f64);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = DMatrix::zeros(dim, k);
    for (c, &src) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        axes.set_column(c, &(v * sign));
    }
    let projected = centred * axes;
    Ok((0..n)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| projected[(i, j)] as f32)
        .collect())
}
