use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{MapMeta, Proposal, Reference, ReferenceEntry, ReferenceList, ReferenceSet};
use crate::rle::RleMask;
use crate::store::{
    save_annotations, save_detections, write_tensor, Annotation, AnnotationSet, Category, DenseFeatureMap,
    DetectionRecord, ImageInfo,
};

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub stride: u32,
    pub dim: usize,
    pub num_categories: usize,
    pub num_objects: usize,
    pub num_distractors: usize,
    /// Per-coordinate noise added to object patches.
    pub noise_sigma: f64,
    /// Object side lengths in patches, inclusive.
    pub min_side: usize,
    pub max_side: usize,
    pub image_id: i64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            stride: 14,
            dim: 64,
            num_categories: 3,
            num_objects: 6,
            num_distractors: 4,
            noise_sigma: 0.0,
            min_side: 2,
            max_side: 4,
            image_id: 1,
            seed: 0,
        }
    }
}

/// Patch-aligned rectangle: rows `[row, row + rows)`, columns `[col, col + cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    /// `None` for distractors.
    pub category_id: Option<i64>,
}

impl Placement {
    fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row..self.row + self.rows).flat_map(move |r| (self.col..self.col + self.cols).map(move |c| (r, c)))
    }

    fn mask(&self, width: u32, height: u32, stride: u32) -> Result<RleMask> {
        let s = stride;
        RleMask::from_rect(
            height,
            width,
            self.col as u32 * s,
            self.row as u32 * s,
            (self.col + self.cols) as u32 * s,
            (self.row + self.rows) as u32 * s,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceImage {
    pub image_id: i64,
    pub category_id: i64,
    pub map: DenseFeatureMap,
    pub mask: RleMask,
}

/// Synthetic target image with planted objects, one reference image per
/// category, ground truth, and class-agnostic proposals.
#[derive(Debug, Clone)]
pub struct PlantedScene {
    pub spec: SceneSpec,
    pub meta: MapMeta,
    pub target: DenseFeatureMap,
    /// Unit-norm category prototypes, row `k` for category id `k + 1`.
    pub prototypes: Vec<Vec<f32>>,
    pub placements: Vec<Placement>,
    pub references: Vec<ReferenceImage>,
    pub ground_truth: AnnotationSet,
    /// Object masks and distractor masks, shuffled.
    pub proposals: Vec<Proposal>,
}

impl PlantedScene {
    pub fn reference_set(&self) -> ReferenceSet {
        let mut set = ReferenceSet::new();
        for r in &self.references {
            set.push(Reference {
                category_id: r.category_id,
                map: r.map.clone(),
                mask: r.mask.clone(),
                stride: self.spec.stride,
            });
        }
        set
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

fn background_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dim: usize) -> Result<DenseFeatureMap> {
    let mut data = Vec::with_capacity(rows * cols * dim);
    for _ in 0..rows * cols {
        data.extend(unit_gaussian(rng, dim));
    }
    DenseFeatureMap::new(rows, cols, dim, data)
}

fn paint(map: &mut DenseFeatureMap, p: &Placement, proto: &[f32], sigma: f64, rng: &mut ChaCha8Rng) {
    for (r, c) in p.cells() {
        let patch = map.patch_mut(r, c);
        for (dst, &v) in patch.iter_mut().zip(proto) {
            let eps: f64 = StandardNormal.sample(rng);
            *dst = (v as f64 + sigma * eps) as f32;
        }
    }
}

/// Draws a rectangle within `grid` that avoids every occupied cell;
/// `occupied` is row-major with `stride_cols` columns.
fn place(
    rng: &mut ChaCha8Rng,
    occupied: &[bool],
    stride_cols: usize,
    grid: (usize, usize),
    sides: (usize, usize),
    category_id: Option<i64>,
) -> Result<Placement> {
    let (rows, cols) = grid;
    for _ in 0..MAX_ATTEMPTS {
        let h = rng.random_range(sides.0..=sides.1);
        let w = rng.random_range(sides.0..=sides.1);
        if h > rows || w > cols {
            continue;
        }
        let p = Placement {
            row: rng.random_range(0..=rows - h),
            col: rng.random_range(0..=cols - w),
            rows: h,
            cols: w,
            category_id,
        };
        if p.cells().all(|(r, c)| !occupied[r * stride_cols + c]) {
            return Ok(p);
        }
    }
    Err(Error::Generation(format!(
        "could not place a {}..={} patch rectangle on a {rows}x{cols} grid after {MAX_ATTEMPTS} attempts",
        sides.0, sides.1
    )))
}

/// Builds a planted scene.
///
/// Background patches are unit-norm Gaussian directions; object `i` belongs to
/// category `i % K + 1` and every one of its patches is that category's
/// prototype plus `N(0, sigma^2 I)` noise. Objects never share a patch, and
/// distractors cover background patches only.
pub fn gen_planted_scene(spec: &SceneSpec) -> Result<PlantedScene> {
    if spec.stride == 0 || spec.width == 0 || spec.height == 0 {
        return Err(Error::Generation("image size and stride must be positive".into()));
    }
    if spec.dim == 0 || spec.num_categories == 0 {
        return Err(Error::Generation(
            "need a positive dimension and at least one category".into(),
        ));
    }
    if spec.min_side == 0 || spec.min_side > spec.max_side {
        return Err(Error::Generation(
            "object sides must satisfy 1 <= min_side <= max_side".into(),
        ));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Generation("noise sigma must be finite and non-negative".into()));
    }
    let s = spec.stride as usize;
    let grid = ((spec.height as usize).div_ceil(s), (spec.width as usize).div_ceil(s));
    // patch-aligned masks must stay inside the image
    let full = ((spec.height as usize) / s, (spec.width as usize) / s);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let prototypes: Vec<Vec<f32>> = (0..spec.num_categories)
        .map(|_| unit_gaussian(&mut rng, spec.dim))
        .collect();
    let sides = (spec.min_side, spec.max_side);

    let mut target = background_map(&mut rng, grid.0, grid.1, spec.dim)?;
    let mut occupied = vec![false; grid.0 * grid.1];
    let mut placements = Vec::with_capacity(spec.num_objects + spec.num_distractors);
    for i in 0..spec.num_objects {
        let k = i % spec.num_categories;
        let p = place(&mut rng, &occupied, grid.1, full, sides, Some(k as i64 + 1))?;
        for (r, c) in p.cells() {
            occupied[r * grid.1 + c] = true;
        }
        paint(&mut target, &p, &prototypes[k], spec.noise_sigma, &mut rng);
        placements.push(p);
    }
    let objects_only = occupied.clone();
    for _ in 0..spec.num_distractors {
        placements.push(place(&mut rng, &objects_only, grid.1, full, sides, None)?);
    }

    let mut references = Vec::with_capacity(spec.num_categories);
    for (k, proto) in prototypes.iter().enumerate() {
        let mut map = background_map(&mut rng, grid.0, grid.1, spec.dim)?;
        let p = place(
            &mut rng,
            &vec![false; grid.0 * grid.1],
            grid.1,
            full,
            sides,
            Some(k as i64 + 1),
        )?;
        paint(&mut map, &p, proto, spec.noise_sigma, &mut rng);
        references.push(ReferenceImage {
            image_id: 1000 + k as i64,
            category_id: k as i64 + 1,
            map,
            mask: p.mask(spec.width, spec.height, spec.stride)?,
        });
    }

    let mut annotations = Vec::with_capacity(spec.num_objects);
    let mut proposals = Vec::with_capacity(placements.len());
    for p in &placements {
        let mask = p.mask(spec.width, spec.height, spec.stride)?;
        if let Some(category_id) = p.category_id {
            annotations.push(Annotation {
                id: annotations.len() as i64 + 1,
                image_id: spec.image_id,
                category_id,
                bbox: mask.bbox(),
                segmentation: Some(mask.clone()),
                iscrowd: false,
            });
        }
        let objectness = rng.random_range(0.5..=1.0);
        proposals.push(Proposal::new(spec.image_id, mask, objectness, None)?);
    }
    proposals.shuffle(&mut rng);

    let ground_truth = AnnotationSet::new(
        vec![ImageInfo {
            id: spec.image_id,
            width: spec.width,
            height: spec.height,
        }],
        annotations,
        (1..=spec.num_categories as i64)
            .map(|id| Category {
                id,
                name: format!("category_{id}"),
            })
            .collect(),
    )?;

    Ok(PlantedScene {
        spec: spec.clone(),
        meta: MapMeta {
            image_id: spec.image_id,
            stride: spec.stride,
            width: spec.width,
            height: spec.height,
        },
        target,
        prototypes,
        placements,
        references,
        ground_truth,
        proposals,
    })
}

/// Writes the scene with the pipeline's file formats:
/// `target.tnsr`, `target.json`, `refs.json` with `ref_<id>.tnsr`,
/// `proposals.json` and `gt.json`.
pub fn write_scene(dir: impl AsRef<Path>, scene: &PlantedScene) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
    write_tensor(dir.join("target.tnsr"), &scene.target.to_tensor())?;
    scene.meta.save(dir.join("target.json"))?;
    let mut entries = Vec::with_capacity(scene.references.len());
    for r in &scene.references {
        let name = format!("ref_{}.tnsr", r.image_id);
        write_tensor(dir.join(&name), &r.map.to_tensor())?;
        entries.push(ReferenceEntry {
            category_id: r.category_id,
            map: name.into(),
            mask: r.mask.clone(),
            stride: Some(scene.spec.stride),
        });
    }
    ReferenceList { references: entries }.save(dir.join("refs.json"))?;
    let records: Vec<DetectionRecord> = scene
        .proposals
        .iter()
        .map(|p| DetectionRecord {
            image_id: p.image_id,
            category_id: 0,
            bbox: Some(p.bbox),
            score: p.objectness,
            segmentation: Some(p.mask.clone()),
            feature: None,
        })
        .collect();
    save_detections(dir.join("proposals.json"), &records)?;
    save_annotations(dir.join("gt.json"), &scene.ground_truth)
}
