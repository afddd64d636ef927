use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mean_metrics, EvalResult, Metrics};
use crate::error::{Error, Result};
use crate::store::read_json;

/// `{"base": [ids], "novel": [ids]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub base: Vec<i64>,
    pub novel: Vec<i64>,
}

pub fn load_split_file(path: impl AsRef<Path>) -> Result<SplitFile> {
    read_json(path.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub name: String,
    pub metrics: Metrics,
    /// Categories of the split that have ground truth.
    pub categories_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub base: SplitRow,
    pub novel: SplitRow,
}

/// Aggregates per-category results into BASE and NOVEL rows.
pub fn split_report(result: &EvalResult, base: &[i64], novel: &[i64]) -> Result<SplitReport> {
    let base_set: BTreeSet<i64> = base.iter().copied().collect();
    let novel_set: BTreeSet<i64> = novel.iter().copied().collect();
    let shared: Vec<i64> = base_set.intersection(&novel_set).copied().collect();
    if !shared.is_empty() {
        return Err(Error::Input(format!(
            "BASE and NOVEL splits share categories {shared:?}"
        )));
    }
    let row = |name: &str, ids: &BTreeSet<i64>| {
        let (metrics, categories_evaluated) =
            mean_metrics(result.categories.iter().filter(|c| ids.contains(&c.category_id)));
        SplitRow {
            name: name.to_string(),
            metrics,
            categories_evaluated,
        }
    };
    Ok(SplitReport {
        base: row("BASE", &base_set),
        novel: row("NOVEL", &novel_set),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CategoryResult, IouType};

    fn result(aps: &[(i64, f64)]) -> EvalResult {
        let categories = aps
            .iter()
            .map(|&(id, ap)| CategoryResult {
                category_id: id,
                name: String::new(),
                num_gt: 1,
                num_detections: 1,
                ap_per_threshold: Some(vec![ap]),
                recall_per_threshold: Some(vec![ap]),
                metrics: Metrics {
                    ap: Some(ap),
                    ap50: Some(ap),
                    ap75: Some(ap),
                    ar: Some(ap),
                },
                ranked: Vec::new(),
            })
            .collect();
        EvalResult {
            iou_type: IouType::Mask,
            categories,
            mean: Metrics {
                ap: None,
                ap50: None,
                ap75: None,
                ar: None,
            },
            categories_evaluated: aps.len(),
            num_detections: aps.len(),
            num_gt: aps.len(),
        }
    }

    #[test]
    fn two_category_hand_case() {
        let r = split_report(&result(&[(1, 0.8), (2, 0.2)]), &[1], &[2]).unwrap();
        assert_eq!(r.base.metrics.ap, Some(0.8));
        assert_eq!(r.novel.metrics.ap, Some(0.2));
        assert_eq!((r.base.categories_evaluated, r.novel.categories_evaluated), (1, 1));
    }

    #[test]
    fn empty_novel_row() {
        let r = split_report(&result(&[(1, 0.8), (2, 0.2)]), &[1, 2], &[]).unwrap();
        assert_eq!(r.novel.categories_evaluated, 0);
        assert_eq!(r.novel.metrics.ap, None);
        assert!((r.base.metrics.ap.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_lists_shared_ids() {
        let err = split_report(&result(&[(1, 0.8)]), &[1, 3, 5], &[5, 3]).unwrap_err();
        assert!(err.to_string().contains("[3, 5]"), "{err}");
    }
}
