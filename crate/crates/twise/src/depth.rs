//! Dense depth rasters and plain scalar grids.
//!
//! [`DepthMap`] is the universal image currency of the crate: a row-major
//! H×W grid of depth values in meters where invalid pixels are encoded as
//! `0.0` (no valid depth is ≤ 0). [`Grid`] is the same raster without the
//! validity convention, used for σ maps, ambiguity maps and signed
//! error-difference data.

use crate::{Error, Result};

/// Row-major H×W depth image in meters. Invalid pixels hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    /// All-invalid map.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Wrap an existing buffer. Values ≤ 0 are treated as invalid and
    /// normalized to exactly 0.
    pub fn from_data(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::config(format!(
                "buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite depth value"));
        }
        for v in &mut data {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn expect_same_shape(&self, other: &DepthMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: other.width,
                got_h: other.height,
            })
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    /// Depth at (x, y); `None` when the pixel is invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.data[self.idx(x, y)];
        (v > 0.0).then_some(v)
    }

    /// Raw value at (x, y); 0.0 means invalid.
    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> f64 {
        self.data[self.idx(x, y)]
    }

    /// Set a valid depth. Panics in debug builds on non-positive values.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        debug_assert!(depth > 0.0 && depth.is_finite());
        let i = self.idx(x, y);
        self.data[i] = depth;
    }

    /// Mark a pixel invalid.
    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.idx(x, y);
        self.data[i] = 0.0;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.data[self.idx(x, y)] > 0.0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    /// Iterator over (x, y, depth) of valid pixels in row-major order.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(move |(i, v)| (i % w, i / w, *v))
    }

    /// Largest valid depth, if any.
    pub fn max_depth(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(None, |acc, v| Some(acc.map_or(v, |m: f64| m.max(v))))
    }
}

/// Row-major H×W scalar raster without a validity convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::config(format!(
                "buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.idx(x, y);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Fixed-order pairwise summation. Used for every loss/metric reduction so
/// results are bit-stable regardless of how the caller chunks the work.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_encoded_as_zero() {
        let m = DepthMap::from_data(2, 2, vec![1.0, 0.0, -3.0, 2.5]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.get(0, 1), None); // negative normalized to invalid
        assert_eq!(m.valid_count(), 2);
        assert_eq!(m.raw(0, 1), 0.0);
    }

    #[test]
    fn from_data_rejects_bad_len_and_nan() {
        assert!(DepthMap::from_data(2, 2, vec![1.0; 3]).is_err());
        assert!(DepthMap::from_data(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (1..=101).map(|i| i as f64 * 0.1).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
