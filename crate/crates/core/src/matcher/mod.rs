//! Training-free in-context instance segmentation.
//!
//! Class prototypes are pooled from reference images under their masks,
//! proposal regions in the target image are pooled the same way, and each
//! proposal takes the category of its most similar prototype. Duplicates are
//! removed with class-wise mask NMS.

mod io;
mod nms;
mod pool;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    load_proposals, load_reference_set, read_prototypes, write_prototypes, MapMeta, ReferenceEntry, ReferenceList,
};
pub use nms::dedup;
pub use pool::{build_prototypes, pool_region_feature};

use crate::error::{Error, Result};
use crate::rle::RleMask;
use crate::store::{DenseFeatureMap, DetectionRecord};

pub const DEFAULT_SIM_THRESHOLD: f32 = 0.5;
pub const DEFAULT_NMS_IOU: f64 = 0.5;
pub const DEFAULT_POINTS_PER_SIDE: u32 = 32;

/// One annotated reference image.
#[derive(Debug, Clone)]
pub struct Reference {
    pub category_id: i64,
    pub map: DenseFeatureMap,
    pub mask: RleMask,
    /// Pixels per patch side for this reference's mask.
    pub stride: u32,
}

/// Reference images grouped by category id.
#[derive(Debug, Clone, Default)]
pub struct ReferenceSet {
    refs: std::collections::BTreeMap<i64, Vec<Reference>>,
}

impl ReferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, reference: Reference) {
        self.refs.entry(reference.category_id).or_default().push(reference);
    }

    /// Categories in ascending id order with their references in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &[Reference])> {
        self.refs.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn num_categories(&self) -> usize {
        self.refs.len()
    }

    pub fn len(&self) -> usize {
        self.refs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

/// Unit-norm class reference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub category_id: i64,
    pub vector: Vec<f32>,
    /// Index of the source reference within its category.
    pub source_ref: usize,
}

/// Class-agnostic candidate region in the target image.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub image_id: i64,
    pub mask: RleMask,
    pub bbox: [f64; 4],
    /// Recorded for diagnostics; ranking uses similarity only.
    pub objectness: f64,
    pub feature: Option<Vec<f32>>,
}

impl Proposal {
    /// The box is derived from the mask as its tight bounds.
    pub fn new(image_id: i64, mask: RleMask, objectness: f64, feature: Option<Vec<f32>>) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::Input(format!("proposal on image {image_id} has an empty mask")));
        }
        if !(0.0..=1.0).contains(&objectness) {
            return Err(Error::Input(format!("objectness {objectness} outside [0, 1]")));
        }
        let bbox = mask.bbox();
        Ok(Self {
            image_id,
            mask,
            bbox,
            objectness,
            feature,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: i64,
    pub category_id: i64,
    pub score: f64,
    pub bbox: [f64; 4],
    pub mask: RleMask,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: Some(d.bbox),
            score: d.score,
            segmentation: Some(d.mask.clone()),
            feature: None,
        }
    }
}

/// `n × n` prompt points at cell centres, row-major.
pub fn grid_points(width: u32, height: u32, points_per_side: u32) -> Result<Vec<(f32, f32)>> {
    if points_per_side == 0 {
        return Err(Error::Input("points per side must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Input(format!(
            "image size must be positive, got {width}x{height}"
        )));
    }
    let n = points_per_side as f64;
    let mut pts = Vec::with_capacity((points_per_side * points_per_side) as usize);
    for j in 0..points_per_side {
        let y = (j as f64 + 0.5) * height as f64 / n;
        for i in 0..points_per_side {
            let x = (i as f64 + 0.5) * width as f64 / n;
            pts.push((x as f32, y as f32));
        }
    }
    Ok(pts)
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Input("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0) as f32)
}

/// Assigns each proposal to the category of its most similar prototype.
///
/// Per-category similarity is the max over that category's prototypes; ties
/// between categories go to the lower id. Scores are `(sim + 1) / 2`.
/// Proposals whose best similarity is below `sim_threshold` are dropped.
pub fn match_proposals(
    proposals: &[Proposal],
    prototypes: &[Prototype],
    target: &DenseFeatureMap,
    stride: u32,
    sim_threshold: f32,
) -> Result<Vec<Detection>> {
    if prototypes.is_empty() {
        return Err(Error::Config("no prototypes to match against".into()));
    }
    let dim = prototypes[0].vector.len();
    if prototypes.iter().any(|p| p.vector.len() != dim) {
        return Err(Error::Shape("prototypes have inconsistent dimensions".into()));
    }
    if let Some(first) = proposals.first() {
        if let Some(p) = proposals.iter().find(|p| p.image_id != first.image_id) {
            return Err(Error::Input(format!(
                "proposals span several images ({} and {})",
                first.image_id, p.image_id
            )));
        }
    }
    let mut by_category: Vec<(i64, Vec<&[f32]>)> = Vec::new();
    for p in prototypes {
        match by_category.iter_mut().find(|(c, _)| *c == p.category_id) {
            Some((_, v)) => v.push(&p.vector),
            None => by_category.push((p.category_id, vec![&p.vector])),
        }
    }
    by_category.sort_by_key(|(c, _)| *c);

    let results: Vec<Option<Detection>> = proposals
        .par_iter()
        .map(|prop| -> Result<Option<Detection>> {
            let pooled;
            let feature: &[f32] = match &prop.feature {
                Some(f) => f,
                None => {
                    pooled = pool_region_feature(target, &prop.mask, stride)?;
                    &pooled
                }
            };
            if feature.len() != dim {
                return Err(Error::Shape(format!(
                    "proposal feature has dimension {}, prototypes have {dim}",
                    feature.len()
                )));
            }
            let mut best: Option<(i64, f32)> = None;
            for (cat, vectors) in &by_category {
                let mut sim = f32::NEG_INFINITY;
                for v in vectors {
                    sim = sim.max(cosine_similarity(feature, v)?);
                }
                // strict comparison keeps the lower category id on ties
                if best.is_none_or(|(_, s)| sim > s) {
                    best = Some((*cat, sim));
                }
            }
            let (category_id, sim) = best.expect("at least one category");
            if sim < sim_threshold {
                return Ok(None);
            }
            Ok(Some(Detection {
                image_id: prop.image_id,
                category_id,
                score: ((sim as f64 + 1.0) / 2.0).clamp(0.0, 1.0),
                bbox: prop.bbox,
                mask: prop.mask.clone(),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}
