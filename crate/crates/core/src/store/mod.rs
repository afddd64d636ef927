//! File formats shared by every stage and by external feature exporters.
//!
//! `TNSR` layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `TNSR`                   |
//! | 4      | 4    | version, u32 = 1               |
//! | 8      | 1    | dtype, u8 (1 = f32, 2 = i64)   |
//! | 9      | 1    | ndim, u8                       |
//! | 10     | 2    | zero padding                   |
//! | 12     | 8·n  | dims, u64 each                 |
//! | ...    |      | row-major payload              |

mod annotations;
mod checkpoint;
mod features;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use annotations::{
    load_annotations, load_detections, save_annotations, save_detections, Annotation, AnnotationSet, Category,
    DetectionRecord, ImageInfo,
};
pub use checkpoint::{checkpoint_bytes, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use features::{read_feature_matrix, read_labels, DenseFeatureMap, FeatureMatrix, LabelVector};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    I64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::I64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I64(Vec<i64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }
}

/// Dense row-major tensor with at least one dimension, every dimension ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<u64>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<u64>, data: TensorData) -> Result<Self> {
        if shape.is_empty() || shape.len() > u8::MAX as usize {
            return Err(Error::Shape(format!(
                "tensor rank must be in 1..=255, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in shape {shape:?}")));
        }
        let numel = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))?;
        if numel != data.len() as u64 {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn from_i64(shape: Vec<u64>, data: Vec<i64>) -> Result<Self> {
        Self::new(shape, TensorData::I64(data))
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::I64(_) => DType::I64,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match &self.data {
            TensorData::I64(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_f32(self) -> Result<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::I64(_) => Err(Error::Format("expected an f32 tensor, found i64".into())),
        }
    }

    pub fn into_i64(self) -> Result<Vec<i64>> {
        match self.data {
            TensorData::I64(v) => Ok(v),
            TensorData::F32(_) => Err(Error::Format("expected an i64 tensor, found f32".into())),
        }
    }

    /// Equality on shape, dtype and raw bit patterns (NaN-safe).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (TensorData::I64(a), TensorData::I64(b)) => a == b,
            _ => false,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.shape.len() + self.numel() * 8);
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses a `TNSR` buffer; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
        if bytes.len() < 12 {
            return Err(fmt(format!("header needs 12 bytes, file has {}", bytes.len())));
        }
        if &bytes[0..4] != TENSOR_MAGIC {
            return Err(fmt(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != TENSOR_VERSION {
            return Err(fmt(format!("unsupported version {version}")));
        }
        let dtype = DType::from_code(bytes[8]).ok_or_else(|| fmt(format!("unknown dtype code {}", bytes[8])))?;
        let ndim = bytes[9] as usize;
        if ndim == 0 {
            return Err(fmt("rank 0 tensors are not allowed".into()));
        }
        if bytes[10] != 0 || bytes[11] != 0 {
            return Err(fmt("non-zero header padding".into()));
        }
        let header_len = 12 + 8 * ndim;
        if bytes.len() < header_len {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: header_len as u64,
                actual: bytes.len() as u64,
            });
        }
        let shape: Vec<u64> = bytes[12..header_len]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let numel = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fmt(format!("shape {shape:?} overflows")))?;
        let expected = numel
            .checked_mul(dtype.size() as u64)
            .ok_or_else(|| fmt(format!("shape {shape:?} overflows")))?;
        let payload = &bytes[header_len..];
        if payload.len() as u64 != expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                actual: payload.len() as u64,
            });
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Tensor::new(shape, data).map_err(|e| fmt(e.to_string()))
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &tensor.to_bytes())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    Tensor::from_bytes(&bytes, path)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::storage(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::storage(path, e))?;
    w.flush().map_err(|e| Error::storage(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    serde_json::from_str(&text).map_err(|source| {
        // semantic failures raised by our own deserializers are validation errors
        if source.is_data() {
            Error::Validation(format!("{}: {source}", path.display()))
        } else {
            Error::Json {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
