use std::cmp::Ordering;

/// Per-detection outcome of matching at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    /// Matched the non-crowd ground truth at this index.
    TruePositive(usize),
    FalsePositive,
    /// Matched a crowd region; excluded from both TP and FP counts.
    Ignored,
}

/// A non-ignored detection pooled across images for one category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedFlag {
    pub score: f64,
    pub image_id: i64,
    /// Position of the detection in the input detection list.
    pub index: usize,
    pub true_positive: bool,
}

/// Sorts pooled detections by score (descending), image id, then input index.
pub fn rank(flags: &mut [RankedFlag]) {
    flags.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.image_id.cmp(&b.image_id))
            .then(a.index.cmp(&b.index))
    });
}

/// Interpolated average precision over `recall_points` evenly spaced recall
/// levels in `[0, 1]`.
///
/// `ranked` holds TP flags in rank order. Precision is replaced by its running
/// maximum from the right, then sampled at the first rank whose recall reaches
/// each level (0 past the final recall). `None` when there is no ground truth.
pub fn average_precision(ranked: &[bool], num_gt: usize, recall_points: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let n = ranked.len();
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..n).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let steps = (recall_points - 1) as f64;
    let mut sum = 0.0;
    for r in 0..recall_points {
        let level = r as f64 / steps;
        let idx = recall.partition_point(|&rc| rc < level);
        if idx < n {
            sum += precision[idx];
        }
    }
    Some(sum / recall_points as f64)
}

/// Recall at each IoU threshold averaged over thresholds; `None` without ground truth.
pub fn average_recall(tp_per_threshold: &[usize], num_gt: usize) -> Option<f64> {
    if num_gt == 0 || tp_per_threshold.is_empty() {
        return None;
    }
    let sum: f64 = tp_per_threshold.iter().map(|&tp| tp as f64 / num_gt as f64).sum();
    Some(sum / tp_per_threshold.len() as f64)
}

/// Greedy COCO matching for one (image, category) group.
///
/// `ious[d][g]` is the IoU of detection `d` (already in score order) with
/// ground truth `g`; crowd entries hold intersection over detection area. Each
/// detection takes the unmatched non-crowd GT with the highest IoU at or above
/// `threshold` (lowest index on ties). A detection with no such GT but a crowd
/// region at or above the threshold is ignored; crowds may absorb any number
/// of detections.
pub fn match_detections(ious: &[Vec<f64>], gt_crowd: &[bool], threshold: f64) -> Vec<MatchOutcome> {
    let mut taken = vec![false; gt_crowd.len()];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if gt_crowd[g] || taken[g] || iou < threshold {
                    continue;
                }
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                return MatchOutcome::TruePositive(g);
            }
            let hits_crowd = row.iter().zip(gt_crowd).any(|(&iou, &crowd)| crowd && iou >= threshold);
            if hits_crowd {
                MatchOutcome::Ignored
            } else {
                MatchOutcome::FalsePositive
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking_is_one() {
        assert_eq!(average_precision(&[true, true, false, false], 2, 101), Some(1.0));
    }

    #[test]
    fn no_detections_is_zero_and_no_gt_is_none() {
        assert_eq!(average_precision(&[], 3, 101), Some(0.0));
        assert_eq!(average_precision(&[false], 0, 101), None);
        assert_eq!(average_recall(&[0, 0], 0), None);
    }

    #[test]
    fn hand_walked_interpolation() {
        let ap = average_precision(&[true, false, true], 2, 101).unwrap();
        let expected = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
        assert!((ap - 0.8350).abs() < 1e-4);
    }

    #[test]
    fn recall_averages_thresholds() {
        assert_eq!(average_recall(&[2, 1], 2), Some(0.75));
    }

    #[test]
    fn matching_basics() {
        assert_eq!(
            match_detections(&[vec![0.9]], &[false], 0.5),
            vec![MatchOutcome::TruePositive(0)]
        );
        assert_eq!(
            match_detections(&[vec![0.9], vec![0.8]], &[false], 0.5),
            vec![MatchOutcome::TruePositive(0), MatchOutcome::FalsePositive]
        );
        // second detection falls through to the crowd region
        assert_eq!(
            match_detections(&[vec![0.9, 0.7], vec![0.8, 0.6]], &[false, true], 0.5),
            vec![MatchOutcome::TruePositive(0), MatchOutcome::Ignored]
        );
        // non-crowd preferred even when the crowd IoU is higher
        assert_eq!(
            match_detections(&[vec![0.55, 0.99]], &[false, true], 0.5),
            vec![MatchOutcome::TruePositive(0)]
        );
        // IoU exactly at the threshold matches; ties go to the lower index
        assert_eq!(
            match_detections(&[vec![0.5, 0.5]], &[false, false], 0.5),
            vec![MatchOutcome::TruePositive(0)]
        );
    }
}
