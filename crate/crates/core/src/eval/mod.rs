//! COCO-protocol detection and segmentation metrics.
//!
//! AP is 101-point interpolated precision averaged over IoU thresholds
//! 0.50:0.05:0.95; AR is recall at 100 detections per image and category,
//! averaged over the same thresholds. Crowd regions absorb matching detections
//! without counting them. Categories without ground truth are excluded from
//! every mean. Area-range breakdowns are not computed.
//!
//! Reductions are fixed: a category's AP is the sum of its per-threshold APs
//! in threshold order divided by their count, and a mean over categories sums
//! in ascending category id.

mod metrics;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{average_precision, average_recall, match_detections, rank, MatchOutcome, RankedFlag};
pub use split::{load_split_file, split_report, SplitFile, SplitReport, SplitRow};

use crate::error::{Error, Result};
use crate::rle::{box_iou, RleMask};
use crate::store::{AnnotationSet, DetectionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouType {
    Box,
    Mask,
}

impl std::str::FromStr for IouType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" | "bbox" => Ok(IouType::Box),
            "mask" | "segm" => Ok(IouType::Mask),
            other => Err(Error::Input(format!(
                "unknown IoU type {other:?}, expected box or mask"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub max_detections: usize,
    pub iou_type: IouType,
    pub category_filter: Option<Vec<i64>>,
}

impl EvalConfig {
    pub fn new(iou_type: IouType) -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            max_detections: 100,
            iou_type,
            category_filter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("at least one IoU threshold is required".into()));
        }
        if self.iou_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("IoU thresholds must be strictly increasing".into()));
        }
        if self.recall_points < 2 {
            return Err(Error::Config("need at least 2 recall points".into()));
        }
        if self.max_detections == 0 {
            return Err(Error::Config("max detections must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold_index(&self, value: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|&t| (t - value).abs() < 1e-9)
    }
}

/// AP/AR summary; every value is in `[0, 1]`, `None` when no category with
/// ground truth contributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category_id: i64,
    pub name: String,
    pub num_gt: usize,
    pub num_detections: usize,
    /// AP at each IoU threshold, in threshold order.
    pub ap_per_threshold: Option<Vec<f64>>,
    pub recall_per_threshold: Option<Vec<f64>>,
    pub metrics: Metrics,
    /// Non-ignored detections in rank order at each threshold.
    #[serde(skip)]
    pub ranked: Vec<Vec<RankedFlag>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub iou_type: IouType,
    pub categories: Vec<CategoryResult>,
    /// Mean over categories that have ground truth.
    pub mean: Metrics,
    pub categories_evaluated: usize,
    pub num_detections: usize,
    pub num_gt: usize,
}

impl EvalResult {
    pub fn category(&self, id: i64) -> Option<&CategoryResult> {
        self.categories.iter().find(|c| c.category_id == id)
    }
}

/// Mean of the per-category metrics over the given results, skipping those
/// without ground truth.
pub(crate) fn mean_metrics<'a>(cats: impl Iterator<Item = &'a CategoryResult>) -> (Metrics, usize) {
    let mut sums = [0.0f64; 4];
    let mut present = [0usize; 4];
    let mut evaluated = 0;
    for c in cats {
        if c.num_gt == 0 {
            continue;
        }
        evaluated += 1;
        let m = &c.metrics;
        for (k, v) in [m.ap, m.ap50, m.ap75, m.ar].into_iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                present[k] += 1;
            }
        }
    }
    let avg = |k: usize| (present[k] > 0).then(|| sums[k] / present[k] as f64);
    (
        Metrics {
            ap: avg(0),
            ap50: avg(1),
            ap75: avg(2),
            ar: avg(3),
        },
        evaluated,
    )
}

enum Region<'a> {
    Box([f64; 4]),
    Mask(&'a RleMask),
}

fn region_iou(det: &Region, gt: &Region, crowd: bool) -> Result<f64> {
    match (det, gt) {
        (Region::Box(a), Region::Box(b)) => Ok(box_iou(a, b, crowd)),
        (Region::Mask(a), Region::Mask(b)) => a.iou(b, crowd),
        _ => unreachable!("regions of one evaluation share a type"),
    }
}

/// Outcomes of one (image, category) group at every threshold, for the
/// retained detections in score order.
struct GroupOutcome {
    image_id: i64,
    category_id: i64,
    det_indices: Vec<usize>,
    outcomes: Vec<Vec<MatchOutcome>>,
}

/// Evaluates detections against ground truth.
pub fn evaluate(dets: &[DetectionRecord], gts: &AnnotationSet, config: &EvalConfig) -> Result<EvalResult> {
    config.validate()?;
    let image_sizes: HashMap<i64, (u32, u32)> = gts.images.iter().map(|i| (i.id, (i.width, i.height))).collect();
    let known_cats: HashSet<i64> = gts.categories.iter().map(|c| c.id).collect();

    let mut categories: Vec<i64> = gts.categories.iter().map(|c| c.id).collect();
    categories.sort_unstable();
    if let Some(filter) = &config.category_filter {
        if let Some(bad) = filter.iter().find(|c| !known_cats.contains(c)) {
            return Err(Error::Validation(format!(
                "category filter names unknown category {bad}"
            )));
        }
        categories.retain(|c| filter.contains(c));
    }
    let selected: HashSet<i64> = categories.iter().copied().collect();

    let mut det_regions: Vec<Option<Region>> = Vec::with_capacity(dets.len());
    for (i, d) in dets.iter().enumerate() {
        if !known_cats.contains(&d.category_id) {
            return Err(Error::Validation(format!(
                "detection {i} has unknown category_id {}",
                d.category_id
            )));
        }
        let Some(&(w, h)) = image_sizes.get(&d.image_id) else {
            return Err(Error::Validation(format!(
                "detection {i} has unknown image_id {}",
                d.image_id
            )));
        };
        if !selected.contains(&d.category_id) {
            det_regions.push(None);
            continue;
        }
        let region = match config.iou_type {
            IouType::Box => match (d.bbox, &d.segmentation) {
                (Some(b), _) => Region::Box(b),
                (None, Some(m)) => Region::Box(m.bbox()),
                (None, None) => {
                    return Err(Error::Validation(format!("detection {i} has neither bbox nor mask")));
                }
            },
            IouType::Mask => {
                let m = d
                    .segmentation
                    .as_ref()
                    .ok_or_else(|| Error::Validation(format!("detection {i} has no mask for mask evaluation")))?;
                if (m.width(), m.height()) != (w, h) {
                    return Err(Error::Validation(format!(
                        "detection {i}: mask is {}x{}, image {} is {h}x{w}",
                        m.height(),
                        m.width(),
                        d.image_id
                    )));
                }
                Region::Mask(m)
            }
        };
        det_regions.push(Some(region));
    }

    let mut gt_regions: Vec<Option<Region>> = Vec::with_capacity(gts.annotations.len());
    for a in &gts.annotations {
        if !selected.contains(&a.category_id) {
            gt_regions.push(None);
            continue;
        }
        gt_regions.push(Some(match config.iou_type {
            IouType::Box => Region::Box(a.bbox),
            IouType::Mask => Region::Mask(
                a.segmentation
                    .as_ref()
                    .ok_or_else(|| Error::Validation(format!("annotation {} has no mask for mask evaluation", a.id)))?,
            ),
        }));
    }

    let mut groups: BTreeMap<(i64, i64), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        if det_regions[i].is_some() {
            groups.entry((d.category_id, d.image_id)).or_default().0.push(i);
        }
    }
    for (i, a) in gts.annotations.iter().enumerate() {
        if gt_regions[i].is_some() {
            groups.entry((a.category_id, a.image_id)).or_default().1.push(i);
        }
    }
    // ((category, image), (detection indices, ground-truth indices))
    type Group = ((i64, i64), (Vec<usize>, Vec<usize>));
    let groups: Vec<Group> = groups.into_iter().collect();

    let outcomes: Vec<GroupOutcome> = groups
        .par_iter()
        .map(|((category_id, image_id), (det_idx, gt_idx))| -> Result<GroupOutcome> {
            let mut order = det_idx.clone();
            order.sort_by(|&a, &b| {
                dets[b]
                    .score
                    .partial_cmp(&dets[a].score)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order.truncate(config.max_detections);
            let crowd: Vec<bool> = gt_idx.iter().map(|&g| gts.annotations[g].iscrowd).collect();
            let mut ious = Vec::with_capacity(order.len());
            for &d in &order {
                let dr = det_regions[d].as_ref().unwrap();
                let row = gt_idx
                    .iter()
                    .zip(&crowd)
                    .map(|(&g, &c)| region_iou(dr, gt_regions[g].as_ref().unwrap(), c))
                    .collect::<Result<Vec<f64>>>()?;
                ious.push(row);
            }
            let outcomes = config
                .iou_thresholds
                .iter()
                .map(|&t| match_detections(&ious, &crowd, t))
                .collect();
            Ok(GroupOutcome {
                image_id: *image_id,
                category_id: *category_id,
                det_indices: order,
                outcomes,
            })
        })
        .collect::<Result<_>>()?;

    let num_thr = config.iou_thresholds.len();
    let idx50 = config.threshold_index(0.5);
    let idx75 = config.threshold_index(0.75);
    let mut results = Vec::with_capacity(categories.len());
    let mut total_gt = 0;
    let mut total_dets = 0;
    for &cat in &categories {
        let num_gt = gts
            .annotations
            .iter()
            .filter(|a| a.category_id == cat && !a.iscrowd)
            .count();
        let num_detections = dets.iter().filter(|d| d.category_id == cat).count();
        total_gt += num_gt;
        total_dets += num_detections;

        let mut pooled: Vec<Vec<RankedFlag>> = vec![Vec::new(); num_thr];
        for g in outcomes.iter().filter(|g| g.category_id == cat) {
            for (t, per_det) in g.outcomes.iter().enumerate() {
                for (&d, outcome) in g.det_indices.iter().zip(per_det) {
                    if *outcome == MatchOutcome::Ignored {
                        continue;
                    }
                    pooled[t].push(RankedFlag {
                        score: dets[d].score,
                        image_id: g.image_id,
                        index: d,
                        true_positive: matches!(outcome, MatchOutcome::TruePositive(_)),
                    });
                }
            }
        }

        for flags in pooled.iter_mut() {
            rank(flags);
        }
        let (ap_per, rec_per) = if num_gt == 0 {
            (None, None)
        } else {
            let mut aps = Vec::with_capacity(num_thr);
            let mut tps = Vec::with_capacity(num_thr);
            for flags in pooled.iter_mut() {
                let hits: Vec<bool> = flags.iter().map(|f| f.true_positive).collect();
                aps.push(average_precision(&hits, num_gt, config.recall_points).expect("num_gt > 0"));
                tps.push(hits.iter().filter(|&&h| h).count());
            }
            let recalls = tps.iter().map(|&tp| tp as f64 / num_gt as f64).collect();
            let ar = average_recall(&tps, num_gt);
            (Some((aps, ar)), Some(recalls))
        };

        let metrics = match &ap_per {
            Some((aps, ar)) => Metrics {
                ap: Some(aps.iter().sum::<f64>() / num_thr as f64),
                ap50: idx50.map(|i| aps[i]),
                ap75: idx75.map(|i| aps[i]),
                ar: *ar,
            },
            None => Metrics {
                ap: None,
                ap50: None,
                ap75: None,
                ar: None,
            },
        };
        results.push(CategoryResult {
            category_id: cat,
            name: gts.category_name(cat).unwrap_or_default().to_string(),
            num_gt,
            num_detections,
            ap_per_threshold: ap_per.map(|(aps, _)| aps),
            recall_per_threshold: rec_per,
            metrics,
            ranked: pooled,
        });
    }

    let (mean, categories_evaluated) = mean_metrics(results.iter());
    Ok(EvalResult {
        iou_type: config.iou_type,
        categories: results,
        mean,
        categories_evaluated,
        num_detections: total_dets,
        num_gt: total_gt,
    })
}
