//! `LPCK` probe checkpoints: magic, version u32 = 1, C u32, D u32, then
//! C·D f32 weights (row-major) and C f32 biases, all little-endian.

use std::fs;
use std::path::Path;

use super::write_bytes;
use crate::error::{Error, Result};
use crate::probe::ProbeModel;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LPCK";
const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &ProbeModel) -> Vec<u8> {
    let (c, d) = (model.num_classes(), model.dim());
    let mut out = Vec::with_capacity(16 + 4 * (c * d + c));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for w in model.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for b in model.bias() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &ProbeModel) -> Result<()> {
    write_bytes(path.as_ref(), &checkpoint_bytes(model))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ProbeModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    parse_checkpoint(&bytes, path)
}

fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<ProbeModel> {
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 16,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fmt("bad checkpoint magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != CHECKPOINT_VERSION {
        return Err(fmt(format!("unsupported checkpoint version {}", word(4))));
    }
    let (c, d) = (word(8) as usize, word(12) as usize);
    let expected = 16 + 4 * (c as u64 * d as u64 + c as u64);
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let floats: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    let (w, b) = floats.split_at(c * d);
    ProbeModel::from_parts(c, d, w.to_vec(), b.to_vec()).map_err(|e| fmt(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let model = ProbeModel::from_parts(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5], vec![0.25, -1.0]).unwrap();
        let bytes = checkpoint_bytes(&model);
        assert_eq!(&bytes[..4], b"LPCK");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 4 * 8);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 4..], &(-1.0f32).to_le_bytes());
        let back = parse_checkpoint(&bytes, Path::new("m.lpck")).unwrap();
        assert_eq!(checkpoint_bytes(&back), bytes);
    }

    #[test]
    fn truncated_checkpoint() {
        let model = ProbeModel::zeros(2, 2).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        bytes.pop();
        assert!(matches!(
            parse_checkpoint(&bytes, Path::new("m")),
            Err(Error::Truncated {
                expected: 40,
                actual: 39,
                ..
            })
        ));
    }
}
