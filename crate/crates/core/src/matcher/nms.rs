use std::cmp::Ordering;

use super::Detection;
use crate::error::Result;

/// Class-wise greedy mask NMS.
///
/// Detections are visited by score (descending), then category id, then input
/// order; one is kept iff its mask IoU with every already kept detection of
/// the same category is below `iou_threshold`. Output is in visiting order.
pub fn dedup(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
            .then(dets[a].category_id.cmp(&dets[b].category_id))
            .then(a.cmp(&b))
    });

    let mut kept: Vec<usize> = Vec::new();
    'next: for i in order {
        let d = &dets[i];
        for &k in &kept {
            let other = &dets[k];
            if other.category_id == d.category_id && d.mask.iou(&other.mask, false)? >= iou_threshold {
                continue 'next;
            }
        }
        kept.push(i);
    }
    Ok(kept.into_iter().map(|i| dets[i].clone()).collect())
}
