//! Brute-force reference implementations for tests.
//!
//! IoU is computed on decoded pixels, suppression by repeated selection, and
//! interpolated precision by scanning every rank. Nothing here calls into the
//! matcher or eval modules.

use std::collections::BTreeMap;

use crate::eval::{EvalConfig, IouType};
use crate::matcher::Detection;
use crate::rle::RleMask;
use crate::store::{AnnotationSet, DetectionRecord};

fn pixel_counts(a: &RleMask, b: &RleMask) -> (u64, u64, u64) {
    let (pa, pb) = (a.decode(), b.decode());
    let mut inter = 0;
    let mut area_a = 0;
    let mut area_b = 0;
    for (&x, &y) in pa.pixels().iter().zip(pb.pixels()) {
        inter += (x && y) as u64;
        area_a += x as u64;
        area_b += y as u64;
    }
    (inter, area_a, area_b)
}

fn pixel_iou(a: &RleMask, b: &RleMask, crowd: bool) -> f64 {
    let (inter, area_a, area_b) = pixel_counts(a, b);
    let union = if crowd { area_a } else { area_a + area_b - inter };
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn rect_iou(a: &[f64; 4], b: &[f64; 4], crowd: bool) -> f64 {
    let left = if a[0] > b[0] { a[0] } else { b[0] };
    let top = if a[1] > b[1] { a[1] } else { b[1] };
    let right = if a[0] + a[2] < b[0] + b[2] {
        a[0] + a[2]
    } else {
        b[0] + b[2]
    };
    let bottom = if a[1] + a[3] < b[1] + b[3] {
        a[1] + a[3]
    } else {
        b[1] + b[3]
    };
    if right <= left || bottom <= top {
        return 0.0;
    }
    let inter = (right - left) * (bottom - top);
    let area_a = a[2] * a[3];
    let union = if crowd { area_a } else { area_a + b[2] * b[3] - inter };
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Repeatedly takes the best remaining detection (score, then lower category,
/// then input order) and removes every same-category detection overlapping it
/// at `iou_threshold` or more. Survivors come back in selection order.
pub fn oracle_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut alive = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut pick: Option<usize> = None;
        for i in 0..dets.len() {
            if !alive[i] {
                continue;
            }
            let better = match pick {
                None => true,
                Some(p) => {
                    dets[i].score > dets[p].score
                        || (dets[i].score == dets[p].score && dets[i].category_id < dets[p].category_id)
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(p) = pick else { break };
        alive[p] = false;
        for i in 0..dets.len() {
            if alive[i]
                && dets[i].category_id == dets[p].category_id
                && pixel_iou(&dets[i].mask, &dets[p].mask, false) >= iou_threshold
            {
                alive[i] = false;
            }
        }
        out.push(dets[p].clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCategory {
    pub num_gt: usize,
    /// Per threshold, `(detection index, is true positive)` for every
    /// non-ignored detection in rank order.
    pub flags: Vec<Vec<(usize, bool)>>,
    pub ap_per_threshold: Vec<f64>,
    pub recall_per_threshold: Vec<f64>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub categories: BTreeMap<i64, OracleCategory>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
}

fn det_region(d: &DetectionRecord, iou_type: IouType) -> ([f64; 4], Option<&RleMask>) {
    let bbox = d
        .bbox
        .unwrap_or_else(|| d.segmentation.as_ref().map(|m| m.bbox()).unwrap_or([0.0; 4]));
    (bbox, d.segmentation.as_ref().filter(|_| iou_type == IouType::Mask))
}

/// Exhaustive COCO-style evaluation. Inputs are assumed valid.
pub fn oracle_match_ap(dets: &[DetectionRecord], gts: &AnnotationSet, config: &EvalConfig) -> OracleMetrics {
    let mut cat_ids: Vec<i64> = gts.categories.iter().map(|c| c.id).collect();
    cat_ids.sort();
    if let Some(f) = &config.category_filter {
        cat_ids.retain(|c| f.contains(c));
    }
    let mut image_ids: Vec<i64> = gts.images.iter().map(|i| i.id).collect();
    image_ids.sort();
    let thresholds = &config.iou_thresholds;
    let levels = config.recall_points;

    let mut categories = BTreeMap::new();
    for &cat in &cat_ids {
        let num_gt = gts
            .annotations
            .iter()
            .filter(|a| a.category_id == cat && !a.iscrowd)
            .count();
        let mut flags: Vec<Vec<(f64, i64, usize, bool)>> = vec![Vec::new(); thresholds.len()];
        for &img in &image_ids {
            let gt_idx: Vec<usize> = (0..gts.annotations.len())
                .filter(|&g| gts.annotations[g].category_id == cat && gts.annotations[g].image_id == img)
                .collect();
            let mut det_idx: Vec<usize> = (0..dets.len())
                .filter(|&d| dets[d].category_id == cat && dets[d].image_id == img)
                .collect();
            // selection sort keeps this visibly independent of the optimized path
            for a in 0..det_idx.len() {
                let mut best = a;
                for b in a + 1..det_idx.len() {
                    let (x, y) = (det_idx[b], det_idx[best]);
                    if dets[x].score > dets[y].score || (dets[x].score == dets[y].score && x < y) {
                        best = b;
                    }
                }
                det_idx.swap(a, best);
            }
            det_idx.truncate(config.max_detections);

            for (t, &thr) in thresholds.iter().enumerate() {
                let mut used = vec![false; gt_idx.len()];
                for &d in &det_idx {
                    let (dbox, dmask) = det_region(&dets[d], config.iou_type);
                    let mut chosen: Option<usize> = None;
                    let mut chosen_iou = -1.0;
                    let mut crowd_hit = false;
                    for (slot, &g) in gt_idx.iter().enumerate() {
                        let ann = &gts.annotations[g];
                        let iou = match (dmask, &ann.segmentation) {
                            (Some(m), Some(gm)) => pixel_iou(m, gm, ann.iscrowd),
                            _ => rect_iou(&dbox, &ann.bbox, ann.iscrowd),
                        };
                        if iou < thr {
                            continue;
                        }
                        if ann.iscrowd {
                            crowd_hit = true;
                        } else if !used[slot] && iou > chosen_iou {
                            chosen = Some(slot);
                            chosen_iou = iou;
                        }
                    }
                    match chosen {
                        Some(slot) => {
                            used[slot] = true;
                            flags[t].push((dets[d].score, img, d, true));
                        }
                        None if crowd_hit => {}
                        None => flags[t].push((dets[d].score, img, d, false)),
                    }
                }
            }
        }

        let mut ranked_flags = Vec::with_capacity(thresholds.len());
        let mut aps = Vec::with_capacity(thresholds.len());
        let mut recalls = Vec::with_capacity(thresholds.len());
        for list in flags.iter_mut() {
            list.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            ranked_flags.push(list.iter().map(|f| (f.2, f.3)).collect::<Vec<_>>());
            if num_gt == 0 {
                continue;
            }
            let mut prec = Vec::new();
            let mut rec = Vec::new();
            let mut tp = 0usize;
            for (k, f) in list.iter().enumerate() {
                tp += f.3 as usize;
                prec.push(tp as f64 / (k + 1) as f64);
                rec.push(tp as f64 / num_gt as f64);
            }
            let mut total = 0.0;
            for r in 0..levels {
                let level = r as f64 / (levels - 1) as f64;
                let mut best = 0.0f64;
                for k in 0..prec.len() {
                    if rec[k] >= level && prec[k] > best {
                        best = prec[k];
                    }
                }
                total += best;
            }
            aps.push(total / levels as f64);
            recalls.push(tp as f64 / num_gt as f64);
        }
        let at = |v: f64| thresholds.iter().position(|&t| (t - v).abs() < 1e-9);
        let has_gt = num_gt > 0;
        categories.insert(
            cat,
            OracleCategory {
                num_gt,
                flags: ranked_flags,
                ap: has_gt.then(|| aps.iter().sum::<f64>() / aps.len() as f64),
                ap50: if has_gt { at(0.5).map(|i| aps[i]) } else { None },
                ap75: if has_gt { at(0.75).map(|i| aps[i]) } else { None },
                ar: has_gt.then(|| recalls.iter().sum::<f64>() / recalls.len() as f64),
                ap_per_threshold: aps,
                recall_per_threshold: recalls,
            },
        );
    }

    let mean = |get: fn(&OracleCategory) -> Option<f64>| {
        let vals: Vec<f64> = categories.values().filter_map(get).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    OracleMetrics {
        ap: mean(|c| c.ap),
        ap50: mean(|c| c.ap50),
        ap75: mean(|c| c.ap75),
        ar: mean(|c| c.ar),
        categories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Annotation, Category, ImageInfo};

    #[test]
    fn empty_inputs() {
        assert!(oracle_nms(&[], 0.5).is_empty());
        let gts = AnnotationSet::new(
            vec![ImageInfo {
                id: 1,
                width: 4,
                height: 4,
            }],
            vec![Annotation {
                id: 1,
                image_id: 1,
                category_id: 1,
                bbox: [0.0, 0.0, 2.0, 2.0],
                segmentation: None,
                iscrowd: false,
            }],
            vec![Category {
                id: 1,
                name: "a".into(),
            }],
        )
        .unwrap();
        let m = oracle_match_ap(&[], &gts, &EvalConfig::new(IouType::Box));
        assert_eq!((m.ap, m.ar), (Some(0.0), Some(0.0)));
        let hit = DetectionRecord {
            image_id: 1,
            category_id: 1,
            bbox: Some([0.0, 0.0, 2.0, 2.0]),
            score: 0.3,
            segmentation: None,
            feature: None,
        };
        let m = oracle_match_ap(&[hit], &gts, &EvalConfig::new(IouType::Box));
        assert_eq!(m.ap, Some(1.0));
    }
}
