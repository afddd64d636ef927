use std::collections::HashSet;
use std::path::Path;

use super::{read_tensor, Tensor};
use crate::error::{Error, Result};

/// Per-image global features, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    ids: Vec<i64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, ids: Vec<i64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "feature matrix {rows}x{dim} needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if ids.len() != rows {
            return Err(Error::Shape(format!("{rows} feature rows but {} ids", ids.len())));
        }
        let mut seen = HashSet::with_capacity(rows);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Validation(format!("duplicate image id {dup} in feature matrix")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, data, ids })
    }

    /// Rows get ids `0..rows`.
    pub fn with_sequential_ids(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(rows, dim, data, (0..rows as i64).collect())
    }

    pub fn from_tensor(features: Tensor, ids: Option<Tensor>) -> Result<Self> {
        let shape = features.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("features must be 2-D [N, D], got {shape:?}")));
        }
        let (rows, dim) = (shape[0] as usize, shape[1] as usize);
        let data = features.into_f32()?;
        let ids = match ids {
            Some(t) => {
                if t.shape().len() != 1 {
                    return Err(Error::Shape(format!("ids must be 1-D, got {:?}", t.shape())));
                }
                t.into_i64()?
            }
            None => (0..rows as i64).collect(),
        };
        Self::new(rows, dim, data, ids)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f32(vec![self.rows as u64, self.dim as u64], self.data.clone())
            .expect("feature matrix shape is validated on construction")
    }

    pub fn ids_tensor(&self) -> Tensor {
        Tensor::from_i64(vec![self.rows as u64], self.ids.clone()).expect("ids are non-empty")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    /// New matrix with the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        Self::new(indices.len(), self.dim, data, ids)
    }
}

/// Integer class labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<i64>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<i64>, num_classes: usize) -> Result<Self> {
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l < 0 || l as usize >= num_classes)
        {
            return Err(Error::Validation(format!(
                "label {l} at index {i} outside 0..{num_classes}"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    /// Infers `num_classes` as `max(label) + 1`.
    pub fn infer(labels: Vec<i64>) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(-1);
        if max < 0 {
            return Err(Error::Input(
                "cannot infer class count from empty or negative labels".into(),
            ));
        }
        Self::new(labels, max as usize + 1)
    }

    pub fn from_tensor(t: Tensor, num_classes: Option<usize>) -> Result<Self> {
        if t.shape().len() != 1 {
            return Err(Error::Shape(format!("labels must be 1-D, got {:?}", t.shape())));
        }
        let labels = t.into_i64()?;
        match num_classes {
            Some(c) => Self::new(labels, c),
            None => Self::infer(labels),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_i64(vec![self.labels.len() as u64], self.labels.clone())
            .expect("label vectors written to disk are non-empty")
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

pub fn read_feature_matrix(features: impl AsRef<Path>, ids: Option<&Path>) -> Result<FeatureMatrix> {
    let t = read_tensor(features)?;
    let ids = ids.map(read_tensor).transpose()?;
    FeatureMatrix::from_tensor(t, ids)
}

pub fn read_labels(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabelVector> {
    LabelVector::from_tensor(read_tensor(path)?, num_classes)
}

/// `[rows, cols, dim]` grid of patch features for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DenseFeatureMap {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::Shape(format!("empty dense map {rows}x{cols}x{dim}")));
        }
        if data.len() != rows * cols * dim {
            return Err(Error::Shape(format!(
                "dense map {rows}x{cols}x{dim} needs {} values, got {}",
                rows * cols * dim,
                data.len()
            )));
        }
        Ok(Self { rows, cols, dim, data })
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let shape = t.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::Shape(format!(
                "dense map must be 3-D [Hp, Wp, D], got {shape:?}"
            )));
        }
        let data = t.into_f32()?;
        Self::new(shape[0] as usize, shape[1] as usize, shape[2] as usize, data)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f32(
            vec![self.rows as u64, self.cols as u64, self.dim as u64],
            self.data.clone(),
        )
        .expect("dense map shape is validated on construction")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.cols + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn patch_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row * self.cols + col) * self.dim;
        &mut self.data[start..start + self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_matrix_invariants() {
        assert!(FeatureMatrix::new(2, 2, vec![0.0; 4], vec![1, 1]).is_err());
        assert!(matches!(
            FeatureMatrix::new(1, 2, vec![0.0, f32::NAN], vec![0]),
            Err(Error::Numeric(_))
        ));
        let m = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![7, 9]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        let back = FeatureMatrix::from_tensor(m.to_tensor(), Some(m.ids_tensor())).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn labels_range_checked() {
        assert!(LabelVector::new(vec![0, 3], 3).is_err());
        assert!(LabelVector::new(vec![-1], 3).is_err());
        assert_eq!(LabelVector::infer(vec![0, 4, 2]).unwrap().num_classes(), 5);
    }

    #[test]
    fn dense_map_indexing() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let m = DenseFeatureMap::new(2, 3, 2, data).unwrap();
        assert_eq!(m.patch(1, 2), &[10.0, 11.0]);
        assert!(DenseFeatureMap::from_tensor(Tensor::from_f32(vec![4], vec![0.0; 4]).unwrap()).is_err());
    }
}
