//! Files consumed and produced by the matching stage.
//!
//! - dense map sidecar: `{"image_id", "stride", "width", "height"}`
//! - reference list: `{"references": [{"category_id", "map", "mask", "stride"?}]}`
//!   where `map` is a `[Hp, Wp, D]` TNSR path relative to the JSON file
//! - prototypes: `[K, D]` TNSR plus `<path>.json` with `category_ids` and `source_refs`
//! - proposals: detections schema, objectness in `score`

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Proposal, Prototype, Reference, ReferenceSet};
use crate::error::{Error, Result};
use crate::rle::RleMask;
use crate::store::{read_json, read_tensor, write_json, write_tensor, DenseFeatureMap, DetectionRecord, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapMeta {
    pub image_id: i64,
    pub stride: u32,
    pub width: u32,
    pub height: u32,
}

impl MapMeta {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let meta: MapMeta = read_json(path.as_ref())?;
        if meta.stride == 0 || meta.width == 0 || meta.height == 0 {
            return Err(Error::Validation(format!(
                "{}: stride and image size must be positive",
                path.as_ref().display()
            )));
        }
        Ok(meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Errors unless `ceil(size / stride)` matches the map grid.
    pub fn check_map(&self, map: &DenseFeatureMap) -> Result<()> {
        let s = self.stride as usize;
        let (rows, cols) = ((self.height as usize).div_ceil(s), (self.width as usize).div_ceil(s));
        if rows != map.rows() || cols != map.cols() {
            return Err(Error::Shape(format!(
                "image {}x{} at stride {s} needs a {rows}x{cols} grid, map is {}x{}",
                self.height,
                self.width,
                map.rows(),
                map.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub category_id: i64,
    pub map: PathBuf,
    pub mask: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReferenceList {
    pub references: Vec<ReferenceEntry>,
}

impl ReferenceList {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Loads a reference list; entries without their own stride use `default_stride`.
pub fn load_reference_set(path: impl AsRef<Path>, default_stride: u32) -> Result<ReferenceSet> {
    let path = path.as_ref();
    let list: ReferenceList = read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut set = ReferenceSet::new();
    for (i, entry) in list.references.into_iter().enumerate() {
        let stride = entry.stride.unwrap_or(default_stride);
        if stride == 0 {
            return Err(Error::Validation(format!("reference {i}: stride must be positive")));
        }
        let map_path = base.join(&entry.map);
        let map = DenseFeatureMap::from_tensor(read_tensor(&map_path)?)?;
        let s = stride as usize;
        let (rows, cols) = (
            (entry.mask.height() as usize).div_ceil(s),
            (entry.mask.width() as usize).div_ceil(s),
        );
        if rows != map.rows() || cols != map.cols() {
            return Err(Error::Shape(format!(
                "reference {i} ({}): mask {}x{} at stride {s} does not fit the {}x{} map",
                map_path.display(),
                entry.mask.height(),
                entry.mask.width(),
                map.rows(),
                map.cols()
            )));
        }
        set.push(Reference {
            category_id: entry.category_id,
            map,
            mask: entry.mask,
            stride,
        });
    }
    Ok(set)
}

#[derive(Debug, Serialize, Deserialize)]
struct PrototypeSidecar {
    category_ids: Vec<i64>,
    source_refs: Vec<usize>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_prototypes(path: impl AsRef<Path>, protos: &[Prototype]) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = protos.first() else {
        return Err(Error::Input("no prototypes to write".into()));
    };
    let d = first.vector.len();
    let mut data = Vec::with_capacity(protos.len() * d);
    for p in protos {
        if p.vector.len() != d {
            return Err(Error::Shape("prototypes have inconsistent dimensions".into()));
        }
        data.extend_from_slice(&p.vector);
    }
    write_tensor(path, &Tensor::from_f32(vec![protos.len() as u64, d as u64], data)?)?;
    write_json(
        &sidecar_path(path),
        &PrototypeSidecar {
            category_ids: protos.iter().map(|p| p.category_id).collect(),
            source_refs: protos.iter().map(|p| p.source_ref).collect(),
        },
    )
}

pub fn read_prototypes(path: impl AsRef<Path>) -> Result<Vec<Prototype>> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.shape().len() != 2 {
        return Err(Error::Shape(format!("prototypes must be [K, D], got {:?}", t.shape())));
    }
    let (k, d) = (t.shape()[0] as usize, t.shape()[1] as usize);
    let data = t.into_f32()?;
    let side: PrototypeSidecar = read_json(&sidecar_path(path))?;
    if side.category_ids.len() != k || side.source_refs.len() != k {
        return Err(Error::Validation(format!(
            "{}: sidecar lists {} categories for {k} prototypes",
            path.display(),
            side.category_ids.len()
        )));
    }
    Ok(data
        .chunks_exact(d)
        .zip(side.category_ids.iter().zip(&side.source_refs))
        .map(|(v, (&category_id, &source_ref))| Prototype {
            category_id,
            vector: v.to_vec(),
            source_ref,
        })
        .collect())
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<Vec<Proposal>> {
    let path = path.as_ref();
    let records: Vec<DetectionRecord> = read_json(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mask = r
                .segmentation
                .ok_or_else(|| Error::Validation(format!("{}: proposal {i} has no mask", path.display())))?;
            Proposal::new(r.image_id, mask, r.score, r.feature)
                .map_err(|e| Error::Validation(format!("{}: proposal {i}: {e}", path.display())))
        })
        .collect()
}
