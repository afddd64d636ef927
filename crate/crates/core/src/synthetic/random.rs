use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matcher::Detection;
use crate::rle::{Bitmask, RleMask};
use crate::store::{Annotation, AnnotationSet, Category, DetectionRecord, ImageInfo};

/// Uniform random pixel mask with a random fill density.
pub fn random_mask(rng: &mut impl Rng, height: u32, width: u32) -> RleMask {
    let density: f64 = rng.random();
    let data = (0..height * width).map(|_| rng.random_bool(density)).collect();
    RleMask::encode(&Bitmask::new(height, width, data).expect("sized to fit"))
}

fn random_rect(rng: &mut impl Rng, height: u32, width: u32) -> RleMask {
    let x0 = rng.random_range(0..width);
    let y0 = rng.random_range(0..height);
    let x1 = rng.random_range(x0 + 1..=width);
    let y1 = rng.random_range(y0 + 1..=height);
    RleMask::from_rect(height, width, x0, y0, x1, y1).expect("non-empty rectangle")
}

/// Moves each edge of a rectangle mask by up to `jitter` pixels, keeping it non-empty.
fn jittered(rng: &mut impl Rng, mask: &RleMask, jitter: i64) -> RleMask {
    let [x, y, w, h] = mask.bbox();
    let (hh, ww) = (mask.height() as i64, mask.width() as i64);
    let mut edge = |v: f64, lo: i64, hi: i64| (v as i64 + rng.random_range(-jitter..=jitter)).clamp(lo, hi);
    let x0 = edge(x, 0, ww - 1);
    let y0 = edge(y, 0, hh - 1);
    let x1 = edge(x + w, x0 + 1, ww);
    let y1 = edge(y + h, y0 + 1, hh);
    RleMask::from_rect(mask.height(), mask.width(), x0 as u32, y0 as u32, x1 as u32, y1 as u32)
        .expect("non-empty rectangle")
}

/// Up to `max_dets` overlapping detections on one image over `categories`
/// classes. Scores are drawn from a small grid so ties occur.
pub fn random_detections(seed: u64, max_dets: usize, categories: i64, size: u32) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..=max_dets);
    let anchors: Vec<RleMask> = (0..3).map(|_| random_rect(&mut rng, size, size)).collect();
    (0..n)
        .map(|_| {
            let mask = if rng.random_bool(0.7) {
                let a = &anchors[rng.random_range(0..anchors.len())];
                jittered(&mut rng, a, 2)
            } else {
                random_rect(&mut rng, size, size)
            };
            Detection {
                image_id: 1,
                category_id: rng.random_range(1..=categories),
                score: rng.random_range(0..20) as f64 / 20.0,
                bbox: mask.bbox(),
                mask,
            }
        })
        .collect()
}

/// Random evaluation instance: up to 10 images with up to 10 ground-truth
/// objects and 10 detections each, three categories, occasional crowd
/// regions, and quantized scores so ties occur.
pub fn random_eval_instance(seed: u64) -> (AnnotationSet, Vec<DetectionRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (16u32, 16u32);
    let num_images = rng.random_range(1..=10);
    let mut images = Vec::new();
    let mut anns = Vec::new();
    let mut dets = Vec::new();
    for img in 0..num_images {
        let image_id = 10 + img as i64;
        images.push(ImageInfo {
            id: image_id,
            width: w,
            height: h,
        });
        let num_gt = rng.random_range(0..=10);
        let mut gt_masks = Vec::new();
        for _ in 0..num_gt {
            let mask = random_rect(&mut rng, h, w);
            let category_id = rng.random_range(1..=3);
            anns.push(Annotation {
                id: anns.len() as i64 + 1,
                image_id,
                category_id,
                bbox: mask.bbox(),
                segmentation: Some(mask.clone()),
                iscrowd: rng.random_bool(0.1),
            });
            gt_masks.push((category_id, mask));
        }
        let num_dets = rng.random_range(0..=10);
        for _ in 0..num_dets {
            let (category_id, mask) = if !gt_masks.is_empty() && rng.random_bool(0.7) {
                let (c, m) = &gt_masks[rng.random_range(0..gt_masks.len())];
                let c = if rng.random_bool(0.85) {
                    *c
                } else {
                    rng.random_range(1..=3)
                };
                (c, jittered(&mut rng, m, 2))
            } else {
                (rng.random_range(1..=3), random_rect(&mut rng, h, w))
            };
            dets.push(DetectionRecord {
                image_id,
                category_id,
                bbox: Some(mask.bbox()),
                score: rng.random_range(1..=10) as f64 / 10.0,
                segmentation: Some(mask),
                feature: None,
            });
        }
    }
    let categories = (1..=3)
        .map(|id| Category {
            id,
            name: format!("c{id}"),
        })
        .collect();
    let set = AnnotationSet::new(images, anns, categories).expect("generated annotations are valid");
    (set, dets)
}
