use super::{l2_norm, Prototype, ReferenceSet};
use crate::error::{Error, Result};
use crate::rle::RleMask;
use crate::store::DenseFeatureMap;

/// Masked mean of patch features.
///
/// The pixel mask is reduced to the patch grid; a patch counts as covered
/// when at least half of its pixels are inside the mask. If no patch is
/// covered, the single patch with the largest coverage is used (first in
/// row-major order on ties).
pub fn pool_region_feature(map: &DenseFeatureMap, mask: &RleMask, stride: u32) -> Result<Vec<f32>> {
    if stride == 0 {
        return Err(Error::Input("stride must be at least 1".into()));
    }
    if mask.is_empty() {
        return Err(Error::Input("cannot pool over an empty mask".into()));
    }
    let (h, w) = (mask.height() as usize, mask.width() as usize);
    let s = stride as usize;
    let (grid_rows, grid_cols) = (h.div_ceil(s), w.div_ceil(s));
    if grid_rows != map.rows() || grid_cols != map.cols() {
        return Err(Error::Shape(format!(
            "mask {h}x{w} at stride {s} maps to a {grid_rows}x{grid_cols} grid, feature map is {}x{}",
            map.rows(),
            map.cols()
        )));
    }

    let bits = mask.decode();
    let mut inside = vec![0usize; grid_rows * grid_cols];
    for (idx, _) in bits.pixels().iter().enumerate().filter(|(_, &b)| b) {
        let (row, col) = (idx / w, idx % w);
        inside[(row / s) * grid_cols + col / s] += 1;
    }
    let patch_area =
        |r: usize, c: usize| ((r + 1) * s).min(h).saturating_sub(r * s) * ((c + 1) * s).min(w).saturating_sub(c * s);

    let mut covered = Vec::new();
    // best fallback as (inside, area) compared by the ratio inside/area
    let mut best: Option<(usize, usize, usize)> = None;
    for r in 0..grid_rows {
        for c in 0..grid_cols {
            let count = inside[r * grid_cols + c];
            let area = patch_area(r, c);
            if 2 * count >= area {
                covered.push((r, c));
            }
            if count > 0 {
                let better = match best {
                    None => true,
                    Some((_, bc, ba)) => count * ba > bc * area,
                };
                if better {
                    best = Some((r * grid_cols + c, count, area));
                }
            }
        }
    }
    if covered.is_empty() {
        let (idx, _, _) = best.expect("non-empty mask touches at least one patch");
        covered.push((idx / grid_cols, idx % grid_cols));
    }

    let d = map.dim();
    let mut acc = vec![0.0f64; d];
    for &(r, c) in &covered {
        for (a, &v) in acc.iter_mut().zip(map.patch(r, c)) {
            *a += v as f64;
        }
    }
    let n = covered.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// One L2-normalised prototype per (category, reference) pair, ordered by
/// category id and then reference order.
pub fn build_prototypes(refs: &ReferenceSet) -> Result<Vec<Prototype>> {
    let mut out = Vec::with_capacity(refs.len());
    for (category_id, list) in refs.iter() {
        for (index, r) in list.iter().enumerate() {
            let pooled = pool_region_feature(&r.map, &r.mask, r.stride)?;
            let norm = l2_norm(&pooled);
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateReference { category_id, index });
            }
            out.push(Prototype {
                category_id,
                vector: pooled.iter().map(|&v| (v as f64 / norm) as f32).collect(),
                source_ref: index,
            });
        }
    }
    Ok(out)
}
