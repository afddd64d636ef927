//! COCO-style `annotations.json` and `detections.json`.
//!
//! Only the fields the toolkit needs are modelled; unknown fields are ignored.
//! Masks are uncompressed RLE objects `{"size": [h, w], "counts": [...]}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::rle::RleMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: i64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: i64,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: i64,
    pub image_id: i64,
    pub category_id: i64,
    /// `[x, y, width, height]` in pixels, top-left origin.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<RleMask>,
    #[serde(
        default,
        serialize_with = "crowd_as_int",
        deserialize_with = "crowd_from_int_or_bool"
    )]
    pub iscrowd: bool,
}

fn crowd_as_int<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(*v as u8)
}

fn crowd_from_int_or_bool<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(i64),
        Bool(bool),
    }
    match Flag::deserialize(d)? {
        Flag::Int(0) => Ok(false),
        Flag::Int(1) => Ok(true),
        Flag::Int(v) => Err(serde::de::Error::custom(format!("iscrowd must be 0 or 1, got {v}"))),
        Flag::Bool(b) => Ok(b),
    }
}

/// Ground truth for a set of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

impl AnnotationSet {
    /// Checks referential integrity and clamps boxes to their image bounds.
    pub fn new(images: Vec<ImageInfo>, annotations: Vec<Annotation>, categories: Vec<Category>) -> Result<Self> {
        let mut set = Self {
            images,
            annotations,
            categories,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&mut self) -> Result<()> {
        let mut image_sizes = HashMap::with_capacity(self.images.len());
        for img in &self.images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::Validation(format!("image {} has zero size", img.id)));
            }
            if image_sizes.insert(img.id, (img.width, img.height)).is_some() {
                return Err(Error::Validation(format!("duplicate image id {}", img.id)));
            }
        }
        let mut cat_ids = HashSet::with_capacity(self.categories.len());
        for cat in &self.categories {
            if !cat_ids.insert(cat.id) {
                return Err(Error::Validation(format!("duplicate category id {}", cat.id)));
            }
        }

        let dangling: Vec<i64> = self
            .annotations
            .iter()
            .filter(|a| !image_sizes.contains_key(&a.image_id))
            .map(|a| a.id)
            .collect();
        if !dangling.is_empty() {
            return Err(Error::Validation(format!(
                "annotations reference unknown images: annotation ids {dangling:?}"
            )));
        }
        let unknown_cat: Vec<i64> = self
            .annotations
            .iter()
            .filter(|a| !cat_ids.contains(&a.category_id))
            .map(|a| a.id)
            .collect();
        if !unknown_cat.is_empty() {
            return Err(Error::Validation(format!(
                "annotations reference unknown categories: annotation ids {unknown_cat:?}"
            )));
        }

        let mut ann_ids = HashSet::with_capacity(self.annotations.len());
        for ann in &mut self.annotations {
            if !ann_ids.insert(ann.id) {
                return Err(Error::Validation(format!("duplicate annotation id {}", ann.id)));
            }
            let (w, h) = image_sizes[&ann.image_id];
            if let Some(seg) = &ann.segmentation {
                if seg.width() != w || seg.height() != h {
                    return Err(Error::Validation(format!(
                        "annotation {}: mask is {}x{} but image {} is {}x{}",
                        ann.id,
                        seg.height(),
                        seg.width(),
                        ann.image_id,
                        h,
                        w
                    )));
                }
            }
            if ann.bbox.iter().any(|v| !v.is_finite()) || ann.bbox[2] < 0.0 || ann.bbox[3] < 0.0 {
                return Err(Error::Validation(format!(
                    "annotation {}: invalid bbox {:?}",
                    ann.id, ann.bbox
                )));
            }
            let clamped = clamp_box(ann.bbox, w as f64, h as f64);
            if clamped != ann.bbox {
                log::warn!(
                    "annotation {}: bbox {:?} clamped to image bounds as {:?}",
                    ann.id,
                    ann.bbox,
                    clamped
                );
                ann.bbox = clamped;
            }
        }
        Ok(())
    }

    pub fn image(&self, id: i64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category_name(&self, id: i64) -> Option<&str> {
        self.categories.iter().find(|c| c.id == id).map(|c| c.name.as_str())
    }

    /// Annotation indices grouped by `(image_id, category_id)`, preserving file order.
    pub fn group_by_image_category(&self) -> BTreeMap<(i64, i64), Vec<usize>> {
        let mut groups: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, a) in self.annotations.iter().enumerate() {
            groups.entry((a.image_id, a.category_id)).or_default().push(i);
        }
        groups
    }
}

fn clamp_box(b: [f64; 4], width: f64, height: f64) -> [f64; 4] {
    let x0 = b[0].clamp(0.0, width);
    let y0 = b[1].clamp(0.0, height);
    let x1 = (b[0] + b[2]).clamp(0.0, width);
    let y1 = (b[1] + b[3]).clamp(0.0, height);
    [x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0)]
}

/// One line of `detections.json`. Proposal files share this schema, with
/// objectness in `score` and `category_id` optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: i64,
    #[serde(default)]
    pub category_id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<RleMask>,
    /// Optional precomputed pooled region feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f32>>,
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let mut set: AnnotationSet = read_json(path)?;
    set.validate()
        .map_err(|e| Error::Validation(format!("{}: {}", path.display(), strip_prefix(&e))))?;
    Ok(set)
}

pub fn save_annotations(path: impl AsRef<Path>, set: &AnnotationSet) -> Result<()> {
    write_json(path.as_ref(), set)
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let dets: Vec<DetectionRecord> = read_json(path)?;
    for (i, d) in dets.iter().enumerate() {
        if !d.score.is_finite() {
            return Err(Error::Validation(format!(
                "{}: detection {i} has non-finite score",
                path.display()
            )));
        }
        if let Some(b) = d.bbox {
            if b.iter().any(|v| !v.is_finite()) || b[2] < 0.0 || b[3] < 0.0 {
                return Err(Error::Validation(format!(
                    "{}: detection {i} has invalid bbox {b:?}",
                    path.display()
                )));
            }
        }
    }
    Ok(dets)
}

pub fn save_detections(path: impl AsRef<Path>, dets: &[DetectionRecord]) -> Result<()> {
    write_json(path.as_ref(), &dets)
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{
            "info": {"ignored": true},
            "images": [{"id": 1, "width": 4, "height": 4, "file_name": "a.jpg"}],
            "annotations": [{"id": 10, "image_id": 1, "category_id": 3, "bbox": [0, 0, 4, 4],
                             "segmentation": {"size": [4, 4], "counts": [0, 16]}, "iscrowd": 0, "area": 16}],
            "categories": [{"id": 3, "name": "thing", "supercategory": "x"}]
        }"#
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_set_loads_full_mask() {
        let dir = tempfile::tempdir().unwrap();
        let set = load_annotations(write(dir.path(), "a.json", minimal_json())).unwrap();
        let mask = set.annotations[0].segmentation.as_ref().unwrap().decode();
        assert_eq!(mask.count_ones(), 16);
        assert!(!set.annotations[0].iscrowd);
    }

    #[test]
    fn dangling_image_lists_annotation_ids() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_json().replace(r#""image_id": 1"#, r#""image_id": 99"#);
        let err = load_annotations(write(dir.path(), "a.json", &text)).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("[10]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rle_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_json().replace("[0, 16]", "[0, 15]");
        let err = load_annotations(write(dir.path(), "a.json", &text)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn syntax_error_is_json_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_annotations(write(dir.path(), "a.json", "{ not json")).unwrap_err();
        assert!(err.is_io_or_format());
    }

    #[test]
    fn bbox_is_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_json().replace("[0, 0, 4, 4]", "[-1, 2, 10, 1]");
        let set = load_annotations(write(dir.path(), "a.json", &text)).unwrap();
        assert_eq!(set.annotations[0].bbox, [0.0, 2.0, 4.0, 1.0]);
    }

    #[test]
    fn detections_schema() {
        let d = DetectionRecord {
            image_id: 1,
            category_id: 2,
            bbox: Some([0.0, 0.0, 1.0, 1.0]),
            score: 0.5,
            segmentation: Some(RleMask::new(1, 1, vec![0, 1]).unwrap()),
            feature: None,
        };
        let v = serde_json::to_value(&d).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 5);
        for k in ["image_id", "category_id", "bbox", "score", "segmentation"] {
            assert!(keys.contains(&k));
        }
    }
}
