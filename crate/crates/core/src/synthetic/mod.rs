//! Seeded fixture generators and brute-force oracles, so every numerical
//! property can be checked without a pretrained encoder.

mod blobs;
mod oracle;
mod random;
mod scene;

pub use blobs::{gen_blobs, BlobSpec};
pub use oracle::{oracle_match_ap, oracle_nms, OracleCategory, OracleMetrics};
pub use random::{random_detections, random_eval_instance, random_mask};
pub use scene::{gen_planted_scene, write_scene, Placement, PlantedScene, ReferenceImage, SceneSpec};
