//! Run-length encoded binary masks.
//!
//! Runs alternate 0s and 1s over the pixels in column-major order, always
//! starting with a (possibly empty) run of 0s. All mask IoU math in the
//! toolkit is done on run lists directly.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense binary mask stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmask {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl Bitmask {
    pub fn new(height: u32, width: u32, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Input(format!(
                "mask dimensions must be at least 1, got {height}x{width}"
            )));
        }
        let expected = height as usize * width as usize;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "bitmask {height}x{width} needs {expected} pixels, got {}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: u32, width: u32) -> Result<Self> {
        Self::new(height, width, vec![false; height as usize * width as usize])
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    /// Row-major pixel values.
    pub fn pixels(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }
}

/// Column-major run-length encoded mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates `sum(counts) == height * width` and that only the leading
    /// run may be empty.
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Format(format!(
                "RLE dimensions must be at least 1, got {height}x{width}"
            )));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = height as u64 * width as u64;
        if total != expected {
            return Err(Error::Format(format!(
                "RLE counts sum to {total}, expected {height}x{width} = {expected}"
            )));
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Format(format!("RLE has an empty run at position {}", pos + 1)));
        }
        Ok(Self { height, width, counts })
    }

    pub fn encode(mask: &Bitmask) -> Self {
        let (h, w) = (mask.height, mask.width);
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for col in 0..w {
            for row in 0..h {
                let v = mask.get(row, col);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            height: h,
            width: w,
            counts,
        }
    }

    pub fn decode(&self) -> Bitmask {
        let h = self.height as usize;
        let w = self.width as usize;
        let mut data = vec![false; h * w];
        let mut pos = 0usize;
        let mut value = false;
        for &c in &self.counts {
            if value {
                for idx in pos..pos + c as usize {
                    let (col, row) = (idx / h, idx % h);
                    data[row * w + col] = true;
                }
            }
            pos += c as usize;
            value = !value;
        }
        Bitmask {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)` in pixels, clipped to the mask.
    pub fn from_rect(height: u32, width: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        let (x1, y1) = (x1.min(width), y1.min(height));
        if x0 >= x1 || y0 >= y1 {
            return Self::new(height, width, vec![height * width]);
        }
        let mut counts = vec![x0 * height + y0];
        for col in x0..x1 {
            counts.push(y1 - y0);
            counts.push(if col + 1 < x1 {
                height - (y1 - y0)
            } else {
                height - y1 + (width - x1) * height
            });
        }
        Self::new(height, width, normalize_runs(counts))
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Tight bounding box `[x, y, w, h]` in pixels; all zeros for an empty mask.
    pub fn bbox(&self) -> [f64; 4] {
        let h = self.height as u64;
        let (mut xmin, mut ymin) = (u64::MAX, u64::MAX);
        let (mut xmax, mut ymax) = (0u64, 0u64);
        let mut pos = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as u64;
            if i % 2 == 1 && c > 0 {
                let (start, end) = (pos, pos + c - 1);
                let (c0, c1) = (start / h, end / h);
                xmin = xmin.min(c0);
                xmax = xmax.max(c1);
                if c0 == c1 {
                    ymin = ymin.min(start % h);
                    ymax = ymax.max(end % h);
                } else {
                    ymin = 0;
                    ymax = h - 1;
                }
            }
            pos += c;
        }
        if xmin == u64::MAX {
            return [0.0; 4];
        }
        [
            xmin as f64,
            ymin as f64,
            (xmax - xmin + 1) as f64,
            (ymax - ymin + 1) as f64,
        ]
    }

    fn check_same_size(&self, other: &RleMask) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Shape(format!(
                "mask size mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Number of pixels set in both masks, computed by merging the run lists.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        self.check_same_size(other)?;
        let (a, b) = (&self.counts, &other.counts);
        let (mut ia, mut ib) = (0usize, 0usize);
        let (mut ra, mut rb) = (a[0] as u64, b[0] as u64);
        let (mut va, mut vb) = (false, false);
        let mut inter = 0u64;
        loop {
            let step = ra.min(rb);
            if va && vb {
                inter += step;
            }
            ra -= step;
            rb -= step;
            while ra == 0 {
                ia += 1;
                if ia == a.len() {
                    return Ok(inter);
                }
                ra = a[ia] as u64;
                va = !va;
            }
            while rb == 0 {
                ib += 1;
                if ib == b.len() {
                    return Ok(inter);
                }
                rb = b[ib] as u64;
                vb = !vb;
            }
        }
    }

    /// Mask IoU. With `crowd` set, `other` is a crowd region and the
    /// denominator is the area of `self` instead of the union.
    pub fn iou(&self, other: &RleMask, crowd: bool) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let denom = if crowd {
            self.area()
        } else {
            self.area() + other.area() - inter
        };
        Ok(if denom == 0 { 0.0 } else { inter as f64 / denom as f64 })
    }
}

/// Drops empty interior runs by merging their neighbours.
fn normalize_runs(counts: Vec<u32>) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(counts.len());
    let mut value = false;
    let mut out_value = true; // value of the last run in `out`
    for (i, c) in counts.into_iter().enumerate() {
        if i == 0 {
            out.push(c);
            out_value = false;
        } else if c > 0 {
            if value == out_value {
                *out.last_mut().unwrap() += c;
            } else {
                out.push(c);
                out_value = value;
            }
        }
        value = !value;
    }
    out
}

/// Box IoU on `[x, y, w, h]` boxes. With `crowd` set, `b` is a crowd region
/// and the denominator is the area of `a`.
pub fn box_iou(a: &[f64; 4], b: &[f64; 4], crowd: bool) -> f64 {
    let iw = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let ih = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let area_a = a[2] * a[3];
    let denom = if crowd { area_a } else { area_a + b[2] * b[3] - inter };
    if denom <= 0.0 {
        0.0
    } else {
        inter / denom
    }
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: Vec<u32>,
}

impl Serialize for RleMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RleJson {
            size: [self.height, self.width],
            counts: self.counts.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RleMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RleJson::deserialize(deserializer)?;
        RleMask::new(raw.size[0], raw.size[1], raw.counts).map_err(serde::de::Error::custom)
    }
}
