//! Single-channel floating point rasters.

use crate::error::{Error, Result};

/// Row-major single-channel image with luminance values in `[0, 1]`.
///
/// Width and height are at least 2 so that 2×2 gradient operators always
/// have support.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub const MIN_SIDE: usize = 2;

    /// Builds an image, checking dimensions and that every value is finite
    /// and in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        let img = Self::from_raw(width, height, data)?;
        if let Some((i, v)) = img.data.iter().enumerate().find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::validation(format!(
                "pixel {} (x={}, y={}) has value {v}, expected finite in [0, 1]",
                i,
                i % width,
                i / width
            )));
        }
        Ok(img)
    }

    /// Builds an image checking only the shape. Values may lie outside
    /// `[0, 1]`; used for signed intermediates such as Laplacian responses.
    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(Error::validation(format!(
                "image must be at least {0}x{0}, got {width}x{height}",
                Self::MIN_SIDE
            )));
        }
        if data.len() != width * height {
            return Err(Error::validation(format!("buffer holds {} values, expected {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image::from_parts(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn clamp01(mut self) -> Image {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        self
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }
}

/// Reflects `i` into `0..n` with the edge sample repeated (`... 1 0 | 0 1 ... n-1 | n-1 n-2 ...`).
/// Works for offsets larger than `n`.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_reflects_with_edge_repeat() {
        let got: Vec<usize> = (-3..7).map(|i| mirror(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        // offsets beyond one period
        assert_eq!(mirror(-9, 2), 0);
        assert_eq!(mirror(13, 3), 1);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(2, 2, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(Image::new(2, 2, vec![0.0, f32::NAN, 1.0, 0.5]).is_err());
        assert!(Image::new(1, 4, vec![0.0; 4]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::from_raw(2, 2, vec![-3.0, 0.0, 0.0, 9.0]).is_ok());
    }
}
